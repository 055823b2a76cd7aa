#include "latelab/errors.hpp"

namespace latelab {

const char* errc_name(errc c) {
  switch (c) {
    case errc::missing_column: return "MissingColumn";
    case errc::non_binary_indicator: return "NonBinaryIndicator";
    case errc::non_finite_value: return "NonFiniteValue";
    case errc::empty_instrument_arm: return "EmptyInstrumentArm";
    case errc::zero_variance_pair: return "ZeroVariancePair";
    case errc::degenerate_null: return "DegenerateNull";
    case errc::rank_deficient_design: return "RankDeficientDesign";
    case errc::separation_detected: return "SeparationDetected";
    case errc::singular_weighting: return "SingularWeighting";
    case errc::non_finite_objective: return "NonFiniteObjective";
    case errc::empty_neighborhood: return "EmptyNeighborhood";
    case errc::all_candidates_degenerate: return "AllCandidatesDegenerate";
    case errc::zero_variance_covariate: return "ZeroVarianceCovariate";
    case errc::insufficient_data: return "InsufficientData";
    case errc::weak_first_stage: return "WeakFirstStage";
    case errc::all_trimmed: return "AllTrimmed";
    case errc::unknown_estimator: return "UnknownEstimator";
    case errc::too_many_failures: return "TooManyFailures";
    case errc::no_compliers: return "NoCompliers";
    case errc::insufficient_donors: return "InsufficientDonors";
    case errc::bad_config: return "BadConfig";
    case errc::bad_argument: return "BadArgument";
  }
  return "UnknownError";
}

}  // namespace latelab
