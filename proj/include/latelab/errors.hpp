#pragma once

#include <stdexcept>
#include <string>

namespace latelab {

// Every recoverable failure in the library is reported through Error with one
// of these codes.  Callers that need to branch on the failure kind (the CLI,
// the simulation loop's per-replication catch) switch on code() instead of
// parsing message text.
enum class errc {
  // data loading / dataset construction
  missing_column,
  non_binary_indicator,
  non_finite_value,
  empty_instrument_arm,
  zero_variance_pair,
  degenerate_null,
  // numerical optimisation
  rank_deficient_design,
  separation_detected,
  singular_weighting,
  non_finite_objective,
  // kernel regression
  empty_neighborhood,
  all_candidates_degenerate,
  // matching
  zero_variance_covariate,
  insufficient_data,
  // estimators
  weak_first_stage,
  all_trimmed,
  unknown_estimator,
  // inference
  too_many_failures,
  // simulation design
  no_compliers,
  insufficient_donors,
  // configuration / CLI
  bad_config,
  bad_argument,
};

const char* errc_name(errc c);

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc c, const std::string& msg) { throw Error(c, msg); }

}  // namespace latelab
