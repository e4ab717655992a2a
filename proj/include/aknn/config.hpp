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
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace aknn {

/**
 * Flat key/value configuration read from an INI-style file.
 *
 *   # comment
 *   [section]
 *   key = value
 *
 * Keys are addressed as "section.key"; section names may themselves contain
 * dots ("domain.a.source_lo"). Later assignments replace earlier ones, which
 * is how command-line overrides are layered on top of a file.
 */
class Config {
  public:
    static Config parse(std::string_view text, std::string_view origin = "<string>");
    static Config load(const std::filesystem::path& path);

    void set(std::string_view key, std::string_view value);
    /// "section.key=value".
    void apply_override(std::string_view assignment);

    bool has(std::string_view key) const;
    std::vector<std::string> keys() const;

    std::string get_string(std::string_view key) const;
    std::string get_string(std::string_view key, std::string_view fallback) const;
    std::uint64_t get_u64(std::string_view key) const;
    std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
    double get_double(std::string_view key) const;
    double get_double(std::string_view key, double fallback) const;
    bool get_bool(std::string_view key, bool fallback) const;
    /// Comma-separated lists.
    std::vector<std::uint64_t> get_u64_list(std::string_view key, std::vector<std::uint64_t> fallback) const;
    std::vector<double> get_double_list(std::string_view key, std::vector<double> fallback) const;

    /// Canonical text form: sections sorted, one key per line. parse(dump()) == *this.
    std::string dump() const;

    friend bool operator==(const Config&, const Config&) = default;

  private:
    std::map<std::string, std::string, std::less<>> values_;
};

std::uint64_t parse_u64(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

}  // namespace aknn
