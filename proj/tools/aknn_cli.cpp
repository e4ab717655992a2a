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


#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "aknn/aknn.h"

namespace {

using ConfigPtr = std::unique_ptr<aknn_config, decltype(&aknn_config_free)>;

int report(aknn_status status) {
    std::string msg = aknn_last_error();
    for (char& c : msg) {
        if (c == '\n') c = ' ';
    }
    std::fprintf(stderr, "aknn: %s: %s\n", aknn_status_name(status), msg.c_str());
    return static_cast<int>(status);
}

void to_stdout(const char* text, size_t len, void*) { std::fwrite(text, 1, len, stdout); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive nearest-neighbor translation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("-c,--config", config_path, "configuration file")->check(CLI::ExistingFile);
    app.add_option("-s,--set", sets, "override a key: section.key=value")->take_all();
    app.allow_extras();
    app.fallthrough();
    app.footer("Any key can also be given as --section.key=value. Run 'aknn keys' for the full list.");

    std::vector<CLI::App*> subs;
    for (size_t i = 0; i < aknn_command_count(); ++i) {
        auto* sub = app.add_subcommand(aknn_command_name(i), aknn_command_summary(i));
        sub->allow_extras();
        subs.push_back(sub);
    }
    auto* keys = app.add_subcommand("keys", "list every configuration key and its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (keys->parsed()) {
        for (size_t i = 0; i < aknn_config_key_count(); ++i) {
            const std::string def = aknn_config_default(i);
            std::printf("%s = %s\n", aknn_config_key(i), def.empty() ? "(required)" : def.c_str());
        }
        return 0;
    }

    aknn_config* raw = nullptr;
    aknn_status st = config_path.empty() ? aknn_config_new(&raw) : aknn_config_load(config_path.c_str(), &raw);
    if (st != AKNN_OK) return report(st);
    ConfigPtr config(raw, aknn_config_free);

    std::vector<std::string> extras = app.remaining();
    for (const auto* sub : subs) {
        if (!sub->parsed()) continue;
        auto more = sub->remaining();
        extras.insert(extras.end(), more.begin(), more.end());
    }
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0) {
            std::fprintf(stderr, "aknn: invalid_argument: unexpected argument '%s'\n", arg.c_str());
            return AKNN_INVALID_ARGUMENT;
        }
        std::string assignment = arg.substr(2);
        if (assignment.find('=') == std::string::npos) {
            if (i + 1 >= extras.size()) {
                std::fprintf(stderr, "aknn: invalid_argument: %s needs a value\n", arg.c_str());
                return AKNN_INVALID_ARGUMENT;
            }
            assignment += "=" + extras[++i];
        }
        sets.push_back(assignment);
    }
    for (const auto& s : sets) {
        st = aknn_config_override(config.get(), s.c_str());
        if (st != AKNN_OK) return report(st);
    }

    for (const auto* sub : subs) {
        if (!sub->parsed()) continue;
        st = aknn_command_run(sub->get_name().c_str(), config.get(), to_stdout, nullptr);
        std::fflush(stdout);
        if (st != AKNN_OK) return report(st);
    }
    return 0;
}
