#pragma once

#include "recount/io.hpp"

namespace recount::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 1;
inline constexpr int exit_numerical = 2;
inline constexpr int exit_flagged = 3;  ///< produced output, but not converged

int cmd_simulate(const RunConfig& config);
int cmd_fit(const RunConfig& config);
int cmd_simstudy(const RunConfig& config);
int cmd_impute(const RunConfig& config);
int cmd_check(const RunConfig& config);
int cmd_predict(const RunConfig& config);
int cmd_curves(const RunConfig& config);

} // namespace recount::cli
