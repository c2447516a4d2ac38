// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "unison/errors.hpp"
#include "unison/gradsuite.hpp"
#include "unison/metrics.hpp"
#include "unison/training/checkpoint.hpp"

namespace unison::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* version_string = "0.1.0";

void write_json(const fs::path& path, const ordered_json& doc) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing", path.string());
    out << doc.dump(2) << '\n';
}

fs::path require_file(const std::string& path, const char* key) {
    if (path.empty()) throw ConfigError(std::string("paths.") + key + " is required for this command");
    if (!fs::exists(path)) throw ContractError(std::string("paths.") + key + " does not exist: " + path);
    return path;
}

fs::path data_dir(const cfg::RunConfig& c) { return require_file(c.paths.data, "data"); }

std::vector<std::string> list_files(const fs::path& out) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(out))
        if (entry.is_regular_file() && entry.path() != out / "manifest.json") files.push_back(fs::relative(entry.path(), out).generic_string());
    std::sort(files.begin(), files.end());
    return files;
}

ordered_json tokens_json(const sg::Tokens& t) { return ordered_json(t); }

sg::Tokens tokens_from(const json& j, const std::string& where) {
    if (!j.is_array()) throw FormatError("expected a token array", where);
    sg::Tokens t;
    for (const auto& v : j) {
        if (!v.is_string()) throw FormatError("tokens must be strings", where);
        t.push_back(v.get<std::string>());
    }
    return t;
}

std::vector<metrics::TokenRecord> reference_records(const world::ParallelCorpus& corpus) {
    std::vector<metrics::TokenRecord> out;
    for (std::size_t i = 0; i < corpus.items.size(); ++i) out.push_back({std::to_string(i), corpus.items[i].target});
    return out;
}

std::vector<sg::SceneGraph> graphs_of(const world::ParallelCorpus& corpus) {
    std::vector<sg::SceneGraph> out;
    out.reserve(corpus.items.size());
    for (const auto& item : corpus.items) out.push_back(item.graph);
    return out;
}

ordered_json histogram_json(const sg::ObjectHistogram& h) {
    return {{"buckets", {"0", "1", "2", ">=3"}}, {"counts", h.counts}, {"fractions", h.fractions}};
}

}  // namespace

// ---------------------------------------------------------------------------

void write_corpus(const fs::path& path, const world::ParallelCorpus& corpus) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing", path.string());
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        const auto& item = corpus.items[i];
        ordered_json rec;
        rec["id"] = std::to_string(i);
        rec["source"] = tokens_json(item.source);
        rec["target"] = tokens_json(item.target);
        rec["paraphrases"] = item.paraphrases;
        rec["graph"] = ordered_json::parse(sg::serialize(item.graph));
        out << rec.dump() << '\n';
    }
}

world::ParallelCorpus read_corpus(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open corpus", path.string());
    world::ParallelCorpus corpus;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(n);
        const json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) throw FormatError("invalid JSON record", where);
        world::CorpusItem item;
        try {
            item.source = tokens_from(rec.at("source"), where);
            item.target = tokens_from(rec.at("target"), where);
            for (const auto& p : rec.at("paraphrases")) item.paraphrases.push_back(tokens_from(p, where));
            item.graph = sg::deserialize(rec.at("graph").dump());
        } catch (const json::exception& e) {
            throw FormatError(std::string("corpus record: ") + e.what(), where);
        } catch (const FormatError& e) {
            throw FormatError(e.what(), where);
        }
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

void save_phase1(const fs::path& dir, const train::Phase1Model& model, const cfg::RunConfig& config) {
    ordered_json meta;
    meta["kind"] = "phase1";
    meta["config"] = cfg::to_json(config);
    train::write_checkpoint(dir, model.params(), meta);
}

train::Phase1Model load_phase1(const fs::path& dir, const world::World& world) {
    if (!fs::exists(dir / "manifest.json")) throw ContractError("phase-1 checkpoint not found in " + dir.string());
    const train::Checkpoint ckpt = train::read_checkpoint(dir);
    if (ckpt.metadata.value("kind", "") != "phase1") throw FormatError("not a phase-1 checkpoint", dir.string());
    const cfg::RunConfig rc = cfg::apply_json(json::parse(ckpt.metadata.at("config").dump()), cfg::RunConfig{});
    train::Phase1Model model(rc.model, rc.phase1.d_c, world, rc.seed);
    ckpt.load_into(model.params());
    return model;
}

void save_phase2(const fs::path& dir, const train::Phase2Model& model, std::size_t dim, const cfg::RunConfig& config) {
    ordered_json meta;
    meta["kind"] = "phase2";
    meta["dim"] = dim;
    meta["config"] = cfg::to_json(config);
    train::write_checkpoint(dir, model.params(), meta);
}

train::Phase2Model load_phase2(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw ContractError("phase-2 checkpoint not found in " + dir.string());
    const train::Checkpoint ckpt = train::read_checkpoint(dir);
    if (ckpt.metadata.value("kind", "") != "phase2") throw FormatError("not a phase-2 checkpoint", dir.string());
    const cfg::RunConfig rc = cfg::apply_json(json::parse(ckpt.metadata.at("config").dump()), cfg::RunConfig{});
    train::Phase2Model model(ckpt.metadata.at("dim").get<std::size_t>(), rc.phase2, rc.seed);
    ckpt.load_into(model.params());
    return model;
}

std::vector<sg::Tokens> caption_graphs(const train::Phase1Model& model, const world::World& world,
                                       const std::vector<sg::SceneGraph>& graphs, const train::Phase2Model* cmm,
                                       std::size_t beam) {
    const world::Distortion distortion = world::make_distortion(world.config, model.config().model_dim);
    std::array<std::vector<sg::SceneGraph>, 2> split;
    std::array<std::vector<std::size_t>, 2> where;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        const std::size_t m = graphs[i].modality == sg::Modality::image ? 1 : 0;
        split[m].push_back(graphs[i]);
        where[m].push_back(i);
    }
    std::vector<sg::Tokens> out(graphs.size());
    for (std::size_t m = 0; m < 2; ++m) {
        if (split[m].empty()) continue;
        train::InferenceOptions opt;
        opt.beam = beam;
        if (m == 1) {
            opt.distortion = &distortion;
            opt.cmm = cmm;
        }
        auto caps = train::infer_captions(model, split[m], world.space, opt);
        for (std::size_t k = 0; k < caps.size(); ++k) out[where[m][k]] = std::move(caps[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------

Outputs gen_data(const cfg::RunConfig& c, const fs::path& out) {
    const world::World w = world::generate_world(c.world_config());
    world::write_world_manifest(out / "world.json", w);
    emb::save_text_embeddings(out / "source.vec", w.space.source);
    emb::save_text_embeddings(out / "target.vec", w.space.target);

    const world::ParallelCorpus train = world::generate_parallel_corpus(w, c.data.train, 1);
    write_corpus(out / "train.jsonl", train);
    Outputs o;
    o.summary["train"] = train.items.size();
    const std::pair<const char*, std::pair<std::size_t, std::uint64_t>> splits[] = {{"val", {c.data.val, 2}},
                                                                                    {"test", {c.data.test, 3}}};
    for (const auto& [name, spec] : splits) {
        const world::ParallelCorpus corpus = world::generate_parallel_corpus(w, spec.first, spec.second);
        write_corpus(out / (std::string(name) + ".jsonl"), corpus);
        sg::write_jsonl(out / (std::string(name) + "_graphs.jsonl"), graphs_of(corpus));
        metrics::write_token_records(out / (std::string(name) + "_refs.jsonl"), reference_records(corpus));
        o.summary[name] = corpus.items.size();
    }

    // Image captions never coincide with a training target sentence.
    std::set<std::string> exclude;
    for (const auto& item : train.items) exclude.insert(world::join(item.target));
    const world::ImageBank bank = world::generate_image_graphs(w, c.data.images, c.world.noise, 4, exclude);
    sg::write_jsonl(out / "images.jsonl", bank.graphs);
    std::vector<metrics::TokenRecord> captions;
    for (std::size_t i = 0; i < bank.hidden_captions.size(); ++i) captions.push_back({std::to_string(i), bank.hidden_captions[i]});
    metrics::write_token_records(out / "image_captions.jsonl", captions);
    o.summary["images"] = bank.graphs.size();
    o.summary["noise"] = {{"duplicated", bank.log.duplicated}, {"relations", bank.log.relations},
                          {"spurious", bank.log.spurious},     {"graphs", bank.log.graphs},
                          {"dropped", bank.log.dropped},       {"attributes", bank.log.attributes}};
    o.files = list_files(out);
    return o;
}

Outputs train_phase1(const cfg::RunConfig& c, const fs::path& out) {
    const fs::path data = data_dir(c);
    const world::World w = world::load_world(data);
    const world::ParallelCorpus corpus = read_corpus(data / "train.jsonl");
    train::Phase1Model model(c.model, c.phase1.d_c, w, c.seed);
    const std::vector<train::Example> examples = model.examples(corpus);

    train::Phase1Hooks hooks;
    hooks.on_epoch = [](std::size_t epoch) { spdlog::info("phase 1: epoch {} done", epoch + 1); };
    const train::Phase1Report report = train::train_phase1(model, examples, w.space, c.phase1, c.seed, hooks);
    save_phase1(out / "checkpoint", model, c);

    ordered_json history;
    history["epoch_xe_per_token"] = report.epoch_xe_per_token;
    history["epoch_kl"] = report.epoch_kl;
    history["final_kl"] = report.final_kl;
    write_json(out / "history.json", history);

    Outputs o;
    o.summary["final_xe_per_token"] = report.epoch_xe_per_token.empty() ? 0.0 : report.epoch_xe_per_token.back();
    o.summary["final_kl"] = report.final_kl;
    o.files = list_files(out);
    return o;
}

Outputs train_phase2(const cfg::RunConfig& c, const fs::path& out) {
    const fs::path data = data_dir(c);
    const world::World w = world::load_world(data);
    if (c.paths.phase1.empty()) throw ConfigError("paths.phase1 is required for train-phase2");
    const train::Phase1Model model = load_phase1(fs::path(c.paths.phase1) / "checkpoint", w);

    const world::ParallelCorpus corpus = read_corpus(data / "train.jsonl");
    const std::vector<sg::SceneGraph> images = sg::read_jsonl(data / "images.jsonl");
    const std::size_t dim = model.config().model_dim;
    const world::Distortion distortion = world::make_distortion(w.config, dim);
    const train::FeaturePools image_pool = train::encode_pools(model, images, w.space, &distortion);
    const train::FeaturePools sentence_pool = train::encode_pools(model, graphs_of(corpus), w.space, nullptr);

    train::Phase2Model cmm(dim, c.phase2, c.seed);
    const train::Phase2Report report = train::train_phase2(model, cmm, image_pool, sentence_pool, c.phase2, c.seed);
    if (!report.checksum_constant) throw NumericError("frozen phase-1 parameters changed during phase 2");
    save_phase2(out / "checkpoint", cmm, dim, c);

    ordered_json history;
    history["cycle"] = report.cycle;
    history["disc_value"] = report.disc_value;
    history["final_cycle_per_dim"] = report.final_cycle_per_dim;
    history["frozen_checksum"] = cfg::hex64(report.frozen_checksum_after);
    write_json(out / "history.json", history);

    Outputs o;
    o.summary["final_cycle_per_dim"] = report.final_cycle_per_dim;
    o.summary["frozen_checksum_constant"] = report.checksum_constant;
    o.files = list_files(out);
    return o;
}

Outputs infer(const cfg::RunConfig& c, const fs::path& out) {
    const fs::path data = data_dir(c);
    const world::World w = world::load_world(data);
    if (c.paths.phase1.empty()) throw ConfigError("paths.phase1 is required for infer");
    const train::Phase1Model model = load_phase1(fs::path(c.paths.phase1) / "checkpoint", w);
    std::optional<train::Phase2Model> cmm;
    if (!c.paths.phase2.empty()) cmm = load_phase2(fs::path(c.paths.phase2) / "checkpoint");

    const fs::path input = c.paths.input.empty() ? data / "images.jsonl" : require_file(c.paths.input, "input");
    const std::vector<sg::SceneGraph> graphs = sg::read_jsonl(input);
    const auto captions = caption_graphs(model, w, graphs, cmm ? &*cmm : nullptr, c.infer.beam);

    std::vector<metrics::TokenRecord> records;
    for (std::size_t i = 0; i < captions.size(); ++i) records.push_back({std::to_string(i), captions[i]});
    metrics::write_token_records(out / "predictions.jsonl", records);

    Outputs o;
    o.summary["graphs"] = graphs.size();
    o.summary["cross_modal_mapping"] = cmm.has_value();
    o.files = list_files(out);
    return o;
}

Outputs eval(const cfg::RunConfig& c, const fs::path& out) {
    const auto candidates = metrics::read_token_records(require_file(c.paths.predictions, "predictions"));
    const auto references = metrics::read_token_records(require_file(c.paths.references, "references"));
    std::vector<std::string> ids;
    std::vector<metrics::Sentence> cands;
    metrics::References refs;
    metrics::align_records(candidates, references, ids, cands, refs);
    const metrics::EvalReport report = metrics::evaluate(ids, cands, refs);
    metrics::write_report_json(out / "report.json", report);
    metrics::write_report_csv(out / "report.csv", report);

    Outputs o;
    o.summary["bleu"] = report.bleu;
    o.summary["rouge_l"] = report.rouge_l;
    o.summary["cider"] = report.cider;
    o.files = list_files(out);
    return o;
}

Outputs parse(const cfg::RunConfig& c, const fs::path& out) {
    const world::World w = world::load_world(data_dir(c));
    const sg::ToyGrammar& grammar = c.parse.language == sg::Language::source ? w.source_grammar : w.target_grammar;
    const fs::path input = require_file(c.paths.input, "input");
    std::ifstream in(input);
    if (!in) throw FormatError("cannot open", input.string());
    std::vector<sg::SceneGraph> graphs;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        std::istringstream words(line);
        sg::Tokens tokens{std::istream_iterator<std::string>(words), std::istream_iterator<std::string>()};
        if (tokens.empty()) continue;
        try {
            graphs.push_back(sg::parse_sentence(tokens, grammar));
        } catch (const ParseError& e) {
            throw ParseError(input.string() + ":" + std::to_string(n) + ": " + e.what(), e.position());
        }
    }
    sg::write_jsonl(out / "graphs.jsonl", graphs);
    Outputs o;
    o.summary["sentences"] = graphs.size();
    o.files = list_files(out);
    return o;
}

Outputs stats(const cfg::RunConfig& c, const fs::path& out) {
    const fs::path input = c.paths.input.empty() ? data_dir(c) / "train.jsonl" : require_file(c.paths.input, "input");
    ordered_json doc;
    // Corpus records carry paraphrases: report the merge-augmented histogram too.
    std::ifstream probe(input);
    std::string first;
    std::getline(probe, first);
    const json head = json::parse(first, nullptr, false);
    if (!head.is_discarded() && head.is_object() && head.contains("paraphrases")) {
        const world::World w = world::load_world(data_dir(c));
        const world::ParallelCorpus corpus = read_corpus(input);
        std::vector<sg::SceneGraph> single, merged;
        for (const auto& item : corpus.items) {
            single.push_back(item.graph);
            std::vector<sg::SceneGraph> group{item.graph};
            for (const auto& p : item.paraphrases) group.push_back(sg::parse_sentence(p, w.source_grammar));
            merged.push_back(sg::merge_graphs(group));
        }
        doc["graphs"] = single.size();
        doc["single"] = histogram_json(sg::graph_stats(single));
        doc["merged"] = histogram_json(sg::graph_stats(merged));
    } else {
        const auto graphs = sg::read_jsonl(input);
        doc["graphs"] = graphs.size();
        doc["single"] = histogram_json(sg::graph_stats(graphs));
    }
    write_json(out / "stats.json", doc);
    Outputs o;
    o.summary = doc;
    o.files = list_files(out);
    return o;
}

Outputs gradcheck(const cfg::RunConfig& c, const fs::path& out) {
    gradsuite::Options opt;
    opt.configs = c.gradcheck.configs;
    opt.max_dim = c.gradcheck.max_dim;
    opt.seed = c.seed;
    const auto rows = gradsuite::run(opt);
    std::cout << gradsuite::format_table(rows) << std::flush;
    ordered_json doc;
    doc["tolerance"] = opt.tolerance;
    doc["rows"] = gradsuite::to_json(rows);
    doc["passed"] = gradsuite::all_passed(rows);
    write_json(out / "gradcheck.json", doc);
    Outputs o;
    o.summary["passed"] = gradsuite::all_passed(rows);
    o.status = gradsuite::all_passed(rows) ? 0 : 1;
    o.files = list_files(out);
    return o;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"gen-data", "train-phase1", "train-phase2", "infer",
                                                   "eval",     "parse",        "stats",        "gradcheck"};
    return names;
}

Outputs run_command(const std::string& command, const cfg::RunConfig& config, const fs::path& out) {
    using Fn = Outputs (*)(const cfg::RunConfig&, const fs::path&);
    static const std::map<std::string, Fn> table = {
        {"gen-data", gen_data}, {"train-phase1", train_phase1}, {"train-phase2", train_phase2}, {"infer", infer},
        {"eval", eval},         {"parse", parse},               {"stats", stats},               {"gradcheck", gradcheck}};
    const auto it = table.find(command);
    if (it == table.end()) throw ConfigError("unknown command '" + command + "'");
    config.validate();
    num::set_precision(config.precision);
    fs::create_directories(out);
    return it->second(config, out);
}

ordered_json versions() {
    return {{"unison", version_string},
            {"checkpoint_format", train::checkpoint_format},
            {"compiler", __VERSION__},
            {"nlohmann_json",
             std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

void write_manifest(const fs::path& out, const std::string& command, const cfg::RunConfig& config,
                    const Outputs& outputs, double wall_seconds) {
    ordered_json m;
    m["command"] = command;
    m["config_hash"] = cfg::config_hash(config);
    m["seed"] = config.seed;
    m["precision"] = num::precision_name(config.precision);
    m["versions"] = versions();
    m["wall_time_seconds"] = wall_seconds;
    m["config"] = cfg::to_json(config);
    m["summary"] = outputs.summary;
    auto& files = m["outputs"] = ordered_json::array();
    for (const std::string& f : outputs.files)
        files.push_back({{"path", f}, {"fnv1a64", cfg::hex64(cfg::file_hash((out / f).string()))}});
    write_json(out / "manifest.json", m);
}

}  // namespace unison::pipeline
