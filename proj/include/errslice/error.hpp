#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace errslice {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public Error {
public:
    ParseError(std::size_t line_no, std::string reason)
        : Error("line " + std::to_string(line_no) + ": " + reason),
          line_no_(line_no), reason_(std::move(reason)) {}

    std::size_t line_no() const { return line_no_; }
    const std::string& reason() const { return reason_; }

private:
    std::size_t line_no_;
    std::string reason_;
};

class EmptyDataset : public Error {
public:
    EmptyDataset() : Error("dataset has no records") {}
};

class NotFound : public Error {
public:
    explicit NotFound(const std::string& what) : Error("not found: " + what) {}
};

class StoreIo : public Error {
public:
    explicit StoreIo(const std::string& what) : Error("store i/o: " + what) {}
};

class AlreadyExists : public Error {
public:
    explicit AlreadyExists(const std::string& what) : Error("already exists: " + what) {}
};

class DimMismatch : public Error {
public:
    explicit DimMismatch(const std::string& what) : Error("dimension mismatch: " + what) {}
};

class KMismatch : public Error {
public:
    KMismatch(std::size_t a, std::size_t b)
        : Error("tuple sizes differ: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

class TooLarge : public Error {
public:
    explicit TooLarge(const std::string& what) : Error("instance too large: " + what) {}
};

class EmptyContents : public Error {
public:
    EmptyContents() : Error("prompt needs at least one document") {}
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& what) : Error(what) {}
};

class EmbedderFailure : public Error {
public:
    EmbedderFailure(std::size_t cluster, const std::string& detail)
        : Error("sentence embedder failed on cluster " + std::to_string(cluster) + ": " + detail),
          cluster_(cluster) {}
    std::size_t cluster() const { return cluster_; }

private:
    std::size_t cluster_;
};

/// Transport or protocol failure of a labeling client. `cluster` is filled
/// in by callers that know which cluster the request belonged to.
class ClientError : public Error {
public:
    explicit ClientError(std::string detail, long cluster = -1)
        : Error(cluster >= 0 ? "cluster " + std::to_string(cluster) + ": " + detail : detail),
          detail_(std::move(detail)), cluster_(cluster) {}

    const std::string& detail() const { return detail_; }
    long cluster() const { return cluster_; }

private:
    std::string detail_;
    long cluster_;
};

} // namespace errslice
