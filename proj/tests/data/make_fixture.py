"""Writes fixture200.jsonl: 200 review records over five topics with
8-dimensional topic-anchored embeddings. Deterministic."""

import json
import random
from pathlib import Path

TOPICS = {
    "custard": (
        ["custard", "pudding", "vanilla", "dessert", "creamy"],
        ["The {0} was rich and the {1} tasted of real {2}.",
         "Ordered the {0} twice, {3} menu is small but the {4} texture won me over.",
         "Runny {0}, bland {2}, worst {3} I have had this year.",
         "Their {0} and {1} are too sweet for me but the {4} finish is nice."],
    ),
    "dentist": (
        ["dentist", "cleaning", "appointment", "hygienist", "filling"],
        ["The {0} was gentle and the {1} took twenty minutes.",
         "Booked an {2} online, the {3} was friendly and explained the {4}.",
         "Waited an hour past my {2}, the {0} rushed the {4}.",
         "Great {3}, painless {1}, I finally like going to the {0}."],
    ),
    "hotel": (
        ["hotel", "room", "lobby", "checkin", "housekeeping"],
        ["Clean {1}, quiet {2}, and {3} took two minutes.",
         "The {0} lost our booking and {4} never came.",
         "Stayed at this {0} for a week, the {1} view was lovely.",
         "Slow {3} and a noisy {2}, but {4} was excellent."],
    ),
    "mechanic": (
        ["mechanic", "brakes", "engine", "invoice", "garage"],
        ["The {0} fixed my {1} the same day.",
         "This {4} padded the {3} and the {2} still rattles.",
         "Honest {0}, fair {3}, {2} runs smooth now.",
         "Dropped the car at the {4} for {1} and waited three days."],
    ),
    "coffee": (
        ["espresso", "latte", "barista", "beans", "roast"],
        ["The {2} pulled a perfect {0} from fresh {3}.",
         "Burnt {4}, watery {1}, would not return.",
         "Best {1} in town and the {3} are roasted in house.",
         "Friendly {2} but the {0} was sour and the {4} stale."],
    ),
}

# Mean loss and error rate per topic: custard and dentist carry most errors.
PROFILE = {"custard": (1.6, 0.55), "dentist": (1.2, 0.45), "hotel": (0.3, 0.08),
           "mechanic": (0.25, 0.06), "coffee": (0.2, 0.05)}

DIM = 8


def main() -> None:
    rng = random.Random(20240607)
    names = list(TOPICS)
    anchors = {}
    for t_i, t in enumerate(names):
        a = [0.0] * DIM
        a[t_i] = 3.0
        a[5 + t_i % 3] += 1.0
        anchors[t] = a
    lines = [json.dumps({"num_classes": 2, "embedding_dim": DIM, "name": "fixture-reviews"})]
    for i in range(200):
        topic = names[i % len(names)]
        words, templates = TOPICS[topic]
        text = rng.choice(templates).format(*words)
        label = rng.randrange(2)
        mean_loss, err = PROFILE[topic]
        wrong = rng.random() < err
        pred = 1 - label if wrong else label
        loss = round(rng.expovariate(1.0 / mean_loss) + (0.7 if wrong else 0.0), 6)
        emb = [round(x + rng.gauss(0.0, 0.35), 6) for x in anchors[topic]]
        rec = {"id": f"r{i:03d}", "text": text, "label": label, "prediction": pred,
               "loss": loss, "embedding": emb}
        lines.append(json.dumps(rec))
    Path(__file__).with_name("fixture200.jsonl").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
