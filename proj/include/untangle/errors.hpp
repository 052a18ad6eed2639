#pragma once

#include <stdexcept>
#include <string>

namespace untangle {

// Error taxonomy shared by the library and the CLI. The CLI maps
// ValidationError to exit code 1 and RuntimeFailure to exit code 2; the
// `code()` string is the machine-parsable prefix printed on stderr.

class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

// Bad inputs: schema violations, out-of-range arguments, shape mismatches.
class ValidationError : public Error {
public:
    ValidationError(std::string code, const std::string& what)
        : Error(std::move(code), what) {}
};

// Failures while executing an otherwise valid request.
class RuntimeFailure : public Error {
public:
    RuntimeFailure(std::string code, const std::string& what)
        : Error(std::move(code), what) {}
};

inline ValidationError schema_error(const std::string& what) { return {"E_SCHEMA", what}; }
inline ValidationError range_error(const std::string& what) { return {"E_RANGE", what}; }
inline ValidationError shape_error(const std::string& what) { return {"E_SHAPE", what}; }
inline ValidationError size_error(const std::string& what) { return {"E_SIZE", what}; }
inline RuntimeFailure numeric_error(const std::string& what) { return {"E_NUMERIC", what}; }
inline RuntimeFailure io_error(const std::string& what) { return {"E_IO", what}; }
inline RuntimeFailure coverage_error(const std::string& what) { return {"E_COVERAGE", what}; }
inline RuntimeFailure metric_undefined(const std::string& what) { return {"E_METRIC_UNDEFINED", what}; }

// Raised by the trainer when the loss leaves the finite range; carries the
// step index so a study can record the failure and move on.
class TrainDivergence : public RuntimeFailure {
public:
    TrainDivergence(long long step, const std::string& diag)
        : RuntimeFailure("E_DIVERGED", "step " + std::to_string(step) + ": " + diag), step_(step) {}
    long long step() const { return step_; }

private:
    long long step_;
};

}  // namespace untangle
