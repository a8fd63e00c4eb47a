#pragma once

#include <string>

#include "xdmatch/pipeline.hpp"
#include "xdmatch/synthgen.hpp"

namespace xdm {

// One config file drives every subcommand; any key may be omitted and
// unknown keys are rejected.
struct AppConfig {
  std::string world_dir = "world";
  std::string out_dir = "out";
  std::string dictionary_file;
  std::string handle_sentinel = "-1";
  WorldConfig world;
  PipelineOptions pipeline;
};

AppConfig load_config(const std::string& path);     // empty path -> defaults
void save_config(const AppConfig& config, const std::string& path);

}  // namespace xdm
