// Copyright 2026 The aknn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.


#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "aknn/config.hpp"

namespace aknn {

struct CommandInfo {
    std::string_view name;
    std::string_view summary;
};

const std::vector<CommandInfo>& commands();

/// Runs one pipeline command. Progress and results go to `out`; artifacts
/// go to the paths the configuration resolves to. Failures throw Error.
void run_command(std::string_view name, const Config& config, std::ostream& out);

/// Space-separated token ids per line, one sequence per line.
std::vector<std::vector<std::uint32_t>> read_sequences(const std::filesystem::path& path);
void write_sequences(const std::vector<std::vector<std::uint32_t>>& seqs, const std::filesystem::path& path);

}  // namespace aknn
