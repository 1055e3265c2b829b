#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flexgrid {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: parse failures, schema mismatches, violated invariants.
/// `element()` names the offending bus, branch, DER or file position.
class InputError : public Error {
  public:
    InputError(const std::string& message, std::string element = {})
        : Error(element.empty() ? message : message + " [" + element + "]"),
          element_(std::move(element)) {}

    const std::string& element() const noexcept { return element_; }

  private:
    std::string element_;
};

/// The edge set over the buses is not a spanning tree.
class TopologyError : public InputError {
  public:
    enum class Kind { Cycle, Disconnected, MultipleSlack };

    TopologyError(Kind kind, const std::string& message, std::vector<std::string> ids)
        : InputError(message, join(ids)), kind_(kind), ids_(std::move(ids)) {}

    Kind kind() const noexcept { return kind_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

  private:
    static std::string join(const std::vector<std::string>& ids) {
        std::string out;
        for (const auto& id : ids) {
            if (!out.empty()) out += ", ";
            out += id;
        }
        return out;
    }

    Kind kind_;
    std::vector<std::string> ids_;
};

/// An iterative solver hit its cap without meeting tolerance.
class ConvergenceError : public Error {
  public:
    using Error::Error;
};

/// An optimization problem has no feasible point.
class InfeasibleError : public Error {
  public:
    using Error::Error;
};

/// Linearization or regression could not be computed (singular Jacobian,
/// rank-deficient regressor).
class NumericalError : public Error {
  public:
    NumericalError(const std::string& message, double condition_number = 0.0)
        : Error(message), condition_number_(condition_number) {}

    double condition_number() const noexcept { return condition_number_; }

  private:
    double condition_number_;
};

}  // namespace flexgrid
