"""Writes prompt_{1,2,25}.txt from prompt_docs.json using the template
directly in Python, as an oracle independent of the C++ builder."""

import json
from pathlib import Path

INSTRUCTION = ("In this task, we`ll assign a short and precise label to a group of documents based on the "
               "topics or concepts most relevant to these documents. The documents are all subsets of a "
               "${task} dataset.")


def build(content, task):
    instruction = INSTRUCTION.replace("${task}", task)
    examples = "\n - ".join(content)
    return instruction + "- " + examples + "\n Group label:"


here = Path(__file__).parent
spec = json.loads((here / "prompt_docs.json").read_text())
for name, docs in spec["cases"].items():
    (here / f"prompt_{name}.txt").write_bytes(build(docs, spec["task"]).encode())
