// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// unison <command> [--config PATH] [--seed N] [--out DIR] [--set K=V]...
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Failures print a
// single JSON object {"error": {"kind", "message"}} on stderr.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "unison/config.hpp"
#include "unison/errors.hpp"
#include "unison/pipeline.hpp"

namespace {

int fail(int code, const std::string& kind, const std::string& message) {
    nlohmann::ordered_json err;
    err["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << err.dump() << std::endl;
    return code;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("unison");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    const char* env = std::getenv("UNISON_LOG");
    const std::string level = env ? env : "info";
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off")
        throw unison::ConfigError("UNISON_LOG must be one of trace, debug, info, warning, error, critical, off; got '" +
                                  level + "'");
    spdlog::set_level(parsed);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical graph mapping captioner on a synthetic bilingual world"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> overrides;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "Generate the world, parallel corpora and image graphs"},
        {"train-phase1", "Train the graph mapping, encoders and decoders on the corpus"},
        {"train-phase2", "Train the cross-modal feature mappers against a phase-1 checkpoint"},
        {"infer", "Caption scene graphs"},
        {"eval", "Score predictions against references (BLEU-1..4, ROUGE-L, CIDEr)"},
        {"parse", "Parse sentences of the toy language into scene graphs"},
        {"stats", "Object-count histogram of a corpus, before and after merge augmentation"},
        {"gradcheck", "Finite-difference check of every loss and module forward"}};
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Config JSON, or a manifest to re-run");
        sub->add_option("--seed", seed, "Run seed (overrides the config)");
        sub->add_option("--out", out_dir, "Output directory (default runs/<command>)");
        sub->add_option("--set", overrides, "Config override key=value, dotted keys")->take_all();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(2, "usage", e.what());
    }
    const std::string command = app.get_subcommands().front()->get_name();
    if (out_dir.empty()) out_dir = "runs/" + command;

    unison::cfg::RunConfig config;
    try {
        setup_logging();
        config = unison::cfg::desk();
        if (!config_path.empty()) config = unison::cfg::load_config(config_path, config);
        for (const std::string& o : overrides) config = unison::cfg::apply_override(o, config);
        if (seed) config.seed = *seed;
        config.validate();
    } catch (const unison::ConfigError& e) {
        return fail(2, "usage", e.what());
    } catch (const unison::ContractError& e) {
        return fail(2, "usage", e.what());
    }

    try {
        spdlog::info("{}: config {} seed {}", command, unison::cfg::config_hash(config), config.seed);
        const auto start = std::chrono::steady_clock::now();
        const unison::pipeline::Outputs outputs = unison::pipeline::run_command(command, config, out_dir);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        unison::pipeline::write_manifest(out_dir, command, config, outputs, wall);
        spdlog::info("{}: wrote {} files to {} in {:.1f}s", command, outputs.files.size(), out_dir, wall);
        if (outputs.status != 0) return fail(1, "check", command + " reported failures; see " + out_dir);
        return 0;
    } catch (const unison::ConfigError& e) {
        return fail(2, "usage", e.what());
    } catch (const unison::Error& e) {
        return fail(1, e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail(1, "internal", e.what());
    }
}
