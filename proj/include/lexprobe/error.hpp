#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lexprobe {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input line. `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class DuplicateIdError : public ValidationError {
public:
    explicit DuplicateIdError(std::string id)
        : ValidationError("duplicate id '" + id + "'"), id_(std::move(id)) {}
    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class InsufficientCandidatesError : public Error {
public:
    InsufficientCandidatesError(std::size_t available, std::size_t required)
        : Error("insufficient candidate lemmas: " + std::to_string(available) + " qualify, " +
                std::to_string(required) + " required (short by " +
                std::to_string(required - available) + ")"),
          available_(available),
          required_(required) {}
    std::size_t available() const noexcept { return available_; }
    std::size_t required() const noexcept { return required_; }
    std::size_t shortfall() const noexcept { return required_ - available_; }

private:
    std::size_t available_;
    std::size_t required_;
};

class StratificationError : public Error {
public:
    StratificationError(std::string lemma, int label, std::size_t available, std::size_t required)
        : Error("stratification infeasible for lemma '" + lemma + "', class " +
                std::to_string(label) + ": " + std::to_string(available) + " available, " +
                std::to_string(required) + " required"),
          lemma_(std::move(lemma)),
          label_(label) {}
    const std::string& lemma() const noexcept { return lemma_; }
    int label() const noexcept { return label_; }

private:
    std::string lemma_;
    int label_;
};

/// Prediction ids do not cover the gold ids one-to-one.
class CoverageError : public Error {
public:
    CoverageError(std::vector<std::string> missing, std::vector<std::string> extra)
        : Error(describe(missing, extra)), missing_(std::move(missing)), extra_(std::move(extra)) {}
    const std::vector<std::string>& missing() const noexcept { return missing_; }
    const std::vector<std::string>& extra() const noexcept { return extra_; }

private:
    static std::string describe(const std::vector<std::string>& missing,
                                const std::vector<std::string>& extra) {
        auto list = [](const std::vector<std::string>& ids) {
            std::string out;
            const std::size_t shown = ids.size() < 10 ? ids.size() : 10;
            for (std::size_t i = 0; i < shown; ++i) {
                if (i) out += ", ";
                out += ids[i];
            }
            if (ids.size() > shown) out += ", ... (" + std::to_string(ids.size()) + " total)";
            return out;
        };
        std::string msg = "prediction coverage error";
        if (!missing.empty()) msg += "; missing ids: " + list(missing);
        if (!extra.empty()) msg += "; extra ids: " + list(extra);
        return msg;
    }

    std::vector<std::string> missing_;
    std::vector<std::string> extra_;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class UndefinedCorrelationError : public Error {
public:
    using Error::Error;
};

class DegenerateVectorError : public Error {
public:
    using Error::Error;
};

class DegenerateTrainingError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ManifestIntegrityError : public Error {
public:
    using Error::Error;
};

/// External runner exited nonzero or timed out.
class RunnerError : public Error {
public:
    using Error::Error;
};

}  // namespace lexprobe
