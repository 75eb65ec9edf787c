#pragma once

#include <iosfwd>
#include <string>

#include "tinyattn/runconfig.hpp"

namespace tinyattn {

struct ParamBreakdown {
  int64_t adapter = 0;
  int64_t decoder = 0;
  int64_t trainable = 0;
  int64_t backbone = 0;
  int64_t total = 0;
  double adapter_fraction = 0.0;    // adapter / backbone
  double trainable_fraction = 0.0;  // trainable / total
};

ParamBreakdown count_params(const RunConfig& config);

// Newline-delimited JSON: one record per evaluation followed by a summary
// record. Written atomically.
void emit_metrics(const TrainReport& report, const ParamBreakdown& counts,
                  const std::string& path);

// Dispatches one command; returns the process exit status (0 on success).
// Throws ConfigError / NumericError / IoError for the CLI to map to codes
// 1 / 2 / 3.
int run(const RunConfig& config, std::ostream& out);

}  // namespace tinyattn
