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


// Binary checkpoints.
//
// Layout, all integers little-endian:
//   "U2S1"  u32 version  u64 config fingerprint  u8 stage (0 = untrained)
//   u32 count, then per parameter (sorted by name):
//     u32 name length, name bytes, u32 rank, u64 extents[rank], f64 values
//   u32 count, velocity records in the same format
//   f64 learning rate, f64 momentum, f64 weight decay
//   u8 has_csm, then u32 length and the CSM as JSON when set

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "u2s/csm.hpp"
#include "u2s/nets.hpp"
#include "u2s/tensor.hpp"
#include "u2s/trainer.hpp"

namespace u2s {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointFormatVersion;
  std::uint64_t fingerprint = 0;
  /// Last completed stage; empty for an untrained model.
  std::optional<Stage> stage;
  std::vector<std::pair<std::string, Tensor>> parameters;  ///< sorted by name
  OptimizerState optimizer;
  std::optional<Csm> csm;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const U2sModel& model, std::uint64_t fingerprint,
                           std::optional<Stage> stage, const OptimizerState* optimizer,
                           const Csm* csm);

/// Copies parameter values into `model`. Missing, extra or misshapen
/// parameters throw kShape.
void restore_parameters(U2sModel& model, const Checkpoint& checkpoint);

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws kCheckpointMagic, kCheckpointVersion or kCheckpointTruncated.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Loads and, when `expected_fingerprint` is given, checks it: a mismatch
/// throws kCheckpointFingerprint unless `force` is set (then it warns).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_fingerprint = std::nullopt,
                           bool force = false);

}  // namespace u2s
