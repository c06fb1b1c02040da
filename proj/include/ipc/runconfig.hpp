#pragma once

#include "ipc/evaluation.hpp"
#include "ipc/training.hpp"

namespace ipc {

// Flat key=value configuration for the CLI; every key has a default and
// unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  AlignerConfig aligner;
  std::string manifest;
  std::string embedder_path;
  std::string checkpoint_out = "checkpoint.ipck";
  std::string log_out = "train_log.csv";
  int gallery_n = 1;
  double far_target = 0.01;
  uint64_t eval_seed = 0;
};

RunConfig parse_runconfig(const std::string& text);
RunConfig load_runconfig(const std::string& path);
std::string runconfig_echo(const RunConfig& cfg);

}  // namespace ipc
