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


#include "aknn/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "aknn/util.hpp"

namespace aknn {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool valid_key(std::string_view key) {
    if (key.empty() || key.front() == '.' || key.back() == '.') return false;
    for (char c : key) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '.' || c == '-';
        if (!ok) return false;
    }
    return true;
}

template <typename T>
std::vector<T> split_list(std::string_view text, std::string_view key, T (*parse)(std::string_view, std::string_view)) {
    std::vector<T> out;
    while (true) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        if (!item.empty()) out.push_back(parse(item, key));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

}  // namespace

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
    text = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    AKNN_THROW_IF_NOT(ec == std::errc() && ptr == text.data() + text.size() && !text.empty(), kInvalidArgument,
                      fmt::format("{}: expected a non-negative integer, got '{}'", what, text));
    return v;
}

double parse_double(std::string_view text, std::string_view what) {
    text = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    AKNN_THROW_IF_NOT(ec == std::errc() && ptr == text.data() + text.size() && !text.empty() && std::isfinite(v),
                      kInvalidArgument, fmt::format("{}: expected a number, got '{}'", what, text));
    return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
    text = trim(text);
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw Error(ErrorCode::kInvalidArgument, fmt::format("{}: expected true or false, got '{}'", what, text));
}

Config Config::parse(std::string_view text, std::string_view origin) {
    Config cfg;
    std::string section;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            AKNN_THROW_IF_NOT(line.back() == ']', kInvalidArgument,
                              fmt::format("{}:{}: unterminated section header", origin, lineno));
            section = std::string(trim(line.substr(1, line.size() - 2)));
            AKNN_THROW_IF_NOT(valid_key(section), kInvalidArgument,
                              fmt::format("{}:{}: bad section name '{}'", origin, lineno, section));
            continue;
        }
        const auto eq = line.find('=');
        AKNN_THROW_IF_NOT(eq != std::string_view::npos, kInvalidArgument,
                          fmt::format("{}:{}: expected key = value", origin, lineno));
        AKNN_THROW_IF_NOT(!section.empty(), kInvalidArgument,
                          fmt::format("{}:{}: key outside of any [section]", origin, lineno));
        const auto key = trim(line.substr(0, eq));
        AKNN_THROW_IF_NOT(valid_key(key), kInvalidArgument,
                          fmt::format("{}:{}: bad key '{}'", origin, lineno, key));
        cfg.set(section + "." + std::string(key), trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    auto in = io::open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void Config::set(std::string_view key, std::string_view value) {
    AKNN_THROW_IF_NOT(valid_key(key) && key.find('.') != std::string_view::npos, kInvalidArgument,
                      fmt::format("bad config key '{}' (expected section.key)", key));
    values_.insert_or_assign(std::string(key), std::string(trim(value)));
}

void Config::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    AKNN_THROW_IF_NOT(eq != std::string_view::npos, kInvalidArgument,
                      fmt::format("override '{}' is not of the form section.key=value", assignment));
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

bool Config::has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

std::string Config::get_string(std::string_view key) const {
    auto it = values_.find(key);
    AKNN_THROW_IF_NOT(it != values_.end(), kInvalidArgument, fmt::format("missing required config key '{}'", key));
    return it->second;
}

std::string Config::get_string(std::string_view key, std::string_view fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? std::string(fallback) : it->second;
}

std::uint64_t Config::get_u64(std::string_view key) const { return parse_u64(get_string(key), key); }

std::uint64_t Config::get_u64(std::string_view key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

double Config::get_double(std::string_view key) const { return parse_double(get_string(key), key); }

double Config::get_double(std::string_view key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool Config::get_bool(std::string_view key, bool fallback) const {
    return has(key) ? parse_bool(get_string(key), key) : fallback;
}

std::vector<std::uint64_t> Config::get_u64_list(std::string_view key, std::vector<std::uint64_t> fallback) const {
    if (!has(key)) return fallback;
    return split_list<std::uint64_t>(get_string(key), key, &parse_u64);
}

std::vector<double> Config::get_double_list(std::string_view key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    return split_list<double>(get_string(key), key, &parse_double);
}

std::string Config::dump() const {
    std::string out;
    std::string current;
    for (const auto& [key, value] : values_) {
        const auto dot = key.rfind('.');
        const auto section = key.substr(0, dot);
        if (section != current || out.empty()) {
            if (!out.empty()) out += '\n';
            out += fmt::format("[{}]\n", section);
            current = section;
        }
        out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
    }
    return out;
}

}  // namespace aknn
