#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fusionsam/data.hpp"
#include "fusionsam/training.hpp"

namespace fusionsam::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Everything a subcommand can read. Config files use the same keys as
// config_to_text, plus the path keys below and `synth.*` generator keys.
struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  std::string data_root = "data";
  std::string checkpoint;
  std::string out = "out";
  std::string split = "test";
  std::string class_map;
  std::string pred_dir;
  bool csv = false;
};

std::vector<std::string> run_config_keys();
/// Applies `file_text` over the defaults, then `overrides` over that.
/// Unknown keys throw ConfigError.
RunConfig build_run_config(const std::string& file_text,
                           const std::vector<std::pair<std::string, std::string>>& overrides);
/// Per-class IoU table (percent, one decimal) or CSV.
void print_report(std::ostream& os, const IouReport& report, bool csv);

int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fusionsam::cli
