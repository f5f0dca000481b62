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


#include "u2s/error.hpp"

#include <iostream>
#include <mutex>

namespace u2s {

namespace {

std::mutex g_sink_mutex;
WarningSink& sink_slot() {
  static WarningSink sink;
  return sink;
}

}  // namespace

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kRuntime: return "runtime";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kShape: return "shape_mismatch";
    case ErrorCode::kUnknownKind: return "unknown_kind";
    case ErrorCode::kLabelRange: return "label_out_of_range";
    case ErrorCode::kNonScalarRoot: return "non_scalar_root";
    case ErrorCode::kDetachedGraph: return "detached_graph";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kMissingCsm: return "missing_csm";
    case ErrorCode::kCheckpointMagic: return "checkpoint_magic";
    case ErrorCode::kCheckpointTruncated: return "checkpoint_truncated";
    case ErrorCode::kCheckpointVersion: return "checkpoint_version";
    case ErrorCode::kCheckpointFingerprint: return "checkpoint_fingerprint";
    case ErrorCode::kEmptyInput: return "empty_input";
  }
  return "unknown";
}

void set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_sink_mutex);
  sink_slot() = std::move(sink);
}

void warn(std::string_view message) {
  std::lock_guard lock(g_sink_mutex);
  if (sink_slot()) {
    sink_slot()(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

}  // namespace u2s
