#ifndef IBLAB_ERRORS_HPP
#define IBLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace iblab {

enum class ErrorKind {
  InvalidParameter,
  Domain,
  Overflow,
  InvalidConfiguration,
  InvalidDataset,
  SingularGram,
  NotPositiveDefinite,
  SolverFailure,
  DomainViolation,
  NotApplicable,
  NormalizationViolation,
  DegenerateData,
  TrainingOverflow,
  Io,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI exit code for an error of this kind.
int exit_code_for(ErrorKind kind);

}  // namespace iblab

#endif
