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

#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace u2s {

/// Failure categories. Values are stable: they are the error codes of the C API.
enum class ErrorCode : int {
  kRuntime = 1,
  kInvalidArgument = 2,
  kValidation = 3,
  kIo = 4,
  kShape = 5,
  kUnknownKind = 6,
  kLabelRange = 7,
  kNonScalarRoot = 8,
  kDetachedGraph = 9,
  kNonFinite = 10,
  kMissingCsm = 11,
  kCheckpointMagic = 12,
  kCheckpointTruncated = 13,
  kCheckpointVersion = 14,
  kCheckpointFingerprint = 15,
  kEmptyInput = 16,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// Non-fatal diagnostics (degenerate CSM, zero-norm columns, ...). Default
// sink writes "warning: ..." lines to stderr.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace u2s
