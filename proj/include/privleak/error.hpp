// Copyright 2026 The Privleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace privleak {

enum class ErrorCode {
  kDimension,
  kConfiguration,
  kInsufficientData,
  kSymmetry,
  kNotPsd,
  kDegenerateInput,
  kInvalidValue,
  kUndefinedCorrelation,
  kDivergence,
  kQuorum,
  kAuth,
  kConflict,
  kValidation,
  kIncomplete,
  kNotFound,
  kPairing,
  kIo,
  kFold,
  kFormat,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kConfiguration: return "configuration";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kSymmetry: return "symmetry";
    case ErrorCode::kNotPsd: return "not-psd";
    case ErrorCode::kDegenerateInput: return "degenerate-input";
    case ErrorCode::kInvalidValue: return "invalid-value";
    case ErrorCode::kUndefinedCorrelation: return "undefined-correlation";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kQuorum: return "quorum";
    case ErrorCode::kAuth: return "auth";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kIncomplete: return "incomplete";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kPairing: return "pairing";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFold: return "fold";
    case ErrorCode::kFormat: return "format";
  }
  return "unknown";
}

// Every failure raised by the library carries one of the codes above so
// callers (CLI, HTTP layer) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + " error: " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace privleak
