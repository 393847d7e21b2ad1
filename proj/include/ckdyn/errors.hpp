#pragma once

#include <stdexcept>
#include <string>

namespace ckdyn {

// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A documented precondition of an operation was violated.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Index outside the available layer history.
class BoundsError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// The computation graph is malformed (cycle, consumed graph).
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Training produced a non-finite gradient or a diverging loss.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// IDX / checkpoint decoding failures. `kind` distinguishes the failure class.
class ParseError : public std::runtime_error {
public:
    enum class Kind { bad_magic, truncated, count_mismatch, malformed };

    ParseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace ckdyn
