// Copyright 2026 The U2S Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Commands that compose the staged protocol through files in the run
// directory:
//
//   runs/<name>/data/{train,test}.csv        gen-data
//   runs/<name>/checkpoints/<stage>.bin      train
//   runs/<name>/history.jsonl                train (stage records replaced on rerun)
//   runs/<name>/csm.json                     train, build-csm
//   runs/<name>/eval_<stage>.json            eval
//   runs/<name>/fusion_table.csv             ablate-fusion
//   runs/<name>/ablate_reg.csv               ablate-reg
//   runs/<name>/sweep_n.csv                  sweep-n
//   runs/<name>/scatter_<source>.csv, weights_sim.csv, weights_hist.csv,
//   runs/<name>/masks/<sample>_<class>.csv, figures/*.svg   export-figures
//
// Every command returns a short plain-text report.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "u2s/config.hpp"
#include "u2s/data.hpp"

namespace u2s {

struct DataSplits {
  Dataset train;
  Dataset test;
  std::vector<PlantedPatch> patches;  ///< synthetic sources only
};

/// Generates or reads the configured data.
DataSplits load_data(const RunConfig& config);

/// Default checkpoint of a stage: <run>/checkpoints/<stage>.bin
std::filesystem::path stage_checkpoint_path(const RunConfig& config, Stage stage);

struct CommandOptions {
  std::optional<std::filesystem::path> checkpoint;  ///< overrides the default input
  std::optional<std::filesystem::path> baseline;    ///< one-pass checkpoint
  bool force = false;                               ///< skip the fingerprint check
};

std::string run_gen_data(const RunConfig& config);
/// `stage` empty trains all three stages in order.
std::string run_train(const RunConfig& config, std::optional<Stage> stage,
                      const CommandOptions& options = {});
std::string run_build_csm(const RunConfig& config, const CommandOptions& options = {});
std::string run_eval(const RunConfig& config, const CommandOptions& options = {});
std::string run_ablate_fusion(const RunConfig& config, const CommandOptions& options = {});
std::string run_ablate_reg(const RunConfig& config, const CommandOptions& options = {});
std::string run_sweep_n(const RunConfig& config, const CommandOptions& options = {});
std::string run_export_figures(const RunConfig& config, const CommandOptions& options = {});

}  // namespace u2s
