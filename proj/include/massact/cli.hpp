// Copyright 2026 The massact Authors. All Rights Reserved.
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

#include <filesystem>
#include <string>
#include <vector>

#include "massact/config.hpp"
#include "massact/error.hpp"

namespace massact::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitIo = 4;

int exit_code(ErrorKind kind) noexcept;

// Each command writes its outputs under `out` and returns the written paths
// in a fixed order.
std::vector<std::filesystem::path> cmd_generate(const config::RunConfig& rc,
                                                const std::filesystem::path& out);
std::vector<std::filesystem::path> cmd_disrupt(const config::RunConfig& rc,
                                               const std::filesystem::path& out);
std::vector<std::filesystem::path> cmd_segment(const config::RunConfig& rc,
                                               const std::filesystem::path& out);
std::vector<std::filesystem::path> cmd_transport(const config::RunConfig& rc,
                                                 const std::filesystem::path& out);
std::vector<std::filesystem::path> cmd_eval_mask(const std::filesystem::path& mask,
                                                 const std::filesystem::path& truth, int band,
                                                 const std::filesystem::path& out);

// Parses argv and dispatches. Errors go to stderr as one JSON line.
int run(int argc, const char* const* argv);

}  // namespace massact::cli
