// Copyright (c) 2026 The adafe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
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
#include <type_traits>

namespace adafe {

enum class Errc {
  kMalformedHeader,
  kUnsupportedEncoding,
  kEmptyAudio,
  kUnsupportedRate,
  kInvalidSpec,
  kOrderTooHigh,
  kShapeMismatch,
  kInvalidOctave,
  kTaskTooSmall,
  kInvalidConfig,
  kIo,
  kDataLeak,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kMalformedHeader: return "MalformedHeader";
    case Errc::kUnsupportedEncoding: return "UnsupportedEncoding";
    case Errc::kEmptyAudio: return "EmptyAudio";
    case Errc::kUnsupportedRate: return "UnsupportedRate";
    case Errc::kInvalidSpec: return "InvalidSpec";
    case Errc::kOrderTooHigh: return "OrderTooHigh";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kInvalidOctave: return "InvalidOctave";
    case Errc::kTaskTooSmall: return "TaskTooSmall";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kIo: return "IoError";
    case Errc::kDataLeak: return "DataLeak";
  }
  return "Unknown";
}

// All library failures surface as adafe::Error; code() says which contract
// was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool ok, Errc code, const char* what) {
  if (!ok) fail(code, what);
}

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

// Builds the message only on failure.
template <class Msg>
  requires std::is_invocable_r_v<std::string, Msg>
void require(bool ok, Errc code, Msg&& what) {
  if (!ok) fail(code, what());
}

}  // namespace adafe
