// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/config.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "unison/errors.hpp"

namespace unison::cfg {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Reads the present keys of one JSON object and remembers which were seen,
// so that leftovers can be reported as unknown.
class Section {
public:
    Section(const json& doc, std::string pointer) : doc_(doc), pointer_(std::move(pointer)) {
        if (!doc_.is_object()) throw ConfigError("expected an object", pointer_.empty() ? "/" : pointer_);
    }

    template <typename T>
    void read(const char* key, T& value) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("expected a boolean", where(key));
            } else if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) throw ConfigError("expected an integer", where(key));
                if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0)
                    throw ConfigError("expected a non-negative integer", where(key));
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError("expected a number", where(key));
            } else {
                if (!it->is_string()) throw ConfigError("expected a string", where(key));
            }
            value = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(e.what(), where(key));
        }
    }

    /// Enumerations stored as strings.
    template <typename T, typename Parse>
    void read_enum(const char* key, T& value, Parse parse) {
        std::string text;
        read(key, text);
        if (doc_.contains(key)) {
            try {
                value = parse(text);
            } catch (const Error& e) {
                throw ConfigError(e.what(), where(key));
            }
        }
    }

    Section child(const char* key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        static const json empty = json::object();
        return Section(it == doc_.end() ? empty : *it, where(key));
    }

    void finish() const {
        for (const auto& [key, _] : doc_.items())
            if (!seen_.count(key)) throw ConfigError("unknown config key", where(key));
    }

private:
    std::string where(const std::string& key) const { return pointer_ + "/" + key; }

    const json& doc_;
    std::string pointer_;
    std::set<std::string> seen_;
};

num::Precision precision_from_string(const std::string& s) {
    if (s == "f32") return num::Precision::f32;
    if (s == "f64") return num::Precision::f64;
    throw ContractError("unknown precision '" + s + "' (expected f32 or f64)");
}

void read_model(Section& s, train::ModelConfig& m) {
    s.read("model_dim", m.model_dim);
    s.read("hidden", m.hidden);
    s.read("attention", m.attention);
    s.read("triplet", m.triplet);
    s.read("word_dim", m.word_dim);
    s.read("key_dim", m.key_dim);
    s.read("gate_hidden", m.gate_hidden);
    s.read("sub_width", m.sub_width);
    s.read("max_len", m.max_len);
    s.read("static_attention", m.static_attention);
    s.read("word_vectors", m.word_vectors);
    s.read_enum("fusion", m.fusion, hgm::fusion_from_string);
}

}  // namespace

void RunConfig::validate() const {
    world_config().validate();
    phase1.validate();
    phase2.validate();
    if (data.train == 0 || data.test == 0) throw ContractError("data.train and data.test must be positive");
    if (infer.beam == 0) throw ContractError("infer.beam must be positive");
    if (model.max_len == 0) throw ContractError("model.max_len must be positive");
    if (gradcheck.configs == 0 || gradcheck.max_dim < 2) throw ContractError("gradcheck needs configs >= 1, max_dim >= 2");
}

world::WorldConfig RunConfig::world_config() const {
    world::WorldConfig w = world;
    w.seed = seed;
    return w;
}

RunConfig desk() {
    RunConfig c;
    c.world.homonym_rate = 0.9;
    c.world.no_context_rate = 0.1;
    c.model.model_dim = 32;
    c.model.hidden = 64;
    c.model.attention = 32;
    c.model.triplet = 64;
    c.model.word_dim = 32;
    c.model.key_dim = 16;
    c.model.gate_hidden = 32;
    c.model.sub_width = 32;
    c.model.word_vectors = true;
    c.phase1.d_c = 16;
    c.phase1.epochs_xe = 15;
    c.phase1.epochs_joint = 5;
    c.phase1.lr = 3e-3;
    c.phase1.lr_end = 0.3;
    c.phase1.batch = 16;
    c.phase2.disc_width = 64;
    c.phase2.mapper_hidden = 64;
    c.phase2.steps = 1500;
    c.phase2.lr = 1e-3;
    return c;
}

ordered_json model_json(const train::ModelConfig& m) {
    return {{"model_dim", m.model_dim},
            {"hidden", m.hidden},
            {"attention", m.attention},
            {"triplet", m.triplet},
            {"word_dim", m.word_dim},
            {"key_dim", m.key_dim},
            {"gate_hidden", m.gate_hidden},
            {"sub_width", m.sub_width},
            {"max_len", m.max_len},
            {"static_attention", m.static_attention},
            {"word_vectors", m.word_vectors},
            {"fusion", hgm::to_string(m.fusion)}};
}

train::ModelConfig model_from_json(const json& doc) {
    train::ModelConfig m;
    Section s(doc, "/model");
    read_model(s, m);
    s.finish();
    return m;
}

ordered_json to_json(const RunConfig& c) {
    const auto& w = c.world;
    ordered_json doc;
    doc["seed"] = c.seed;
    doc["precision"] = num::precision_name(c.precision);
    doc["world"] = {{"n_objects", w.n_objects},
                    {"n_relations", w.n_relations},
                    {"n_attributes", w.n_attributes},
                    {"homonym_count", w.homonym_count},
                    {"contexts_per_sense", w.contexts_per_sense},
                    {"paraphrases_per_sentence", w.paraphrases_per_sentence},
                    {"embedding_dim", w.embedding_dim},
                    {"homonym_rate", w.homonym_rate},
                    {"neighbor_context_rate", w.neighbor_context_rate},
                    {"no_context_rate", w.no_context_rate},
                    {"attribute_rate", w.attribute_rate},
                    {"noise",
                     {{"duplicate_triplet_rate", w.noise.duplicate_triplet_rate},
                      {"spurious_object_rate", w.noise.spurious_object_rate},
                      {"attribute_drop_rate", w.noise.attribute_drop_rate}}},
                    {"distortion_scale", w.distortion_scale},
                    {"distortion_bias", w.distortion_bias}};
    doc["data"] = {{"train", c.data.train}, {"val", c.data.val}, {"test", c.data.test}, {"images", c.data.images}};
    doc["model"] = model_json(c.model);
    doc["phase1"] = {{"d_c", c.phase1.d_c},
                     {"epochs_xe", c.phase1.epochs_xe},
                     {"epochs_joint", c.phase1.epochs_joint},
                     {"lr", c.phase1.lr},
                     {"batch", c.phase1.batch},
                     {"joint", c.phase1.joint},
                     {"kl_weight", c.phase1.kl_weight},
                     {"lr_end", c.phase1.lr_end}};
    doc["phase2"] = {{"lambda", c.phase2.lambda},
                     {"disc_width", c.phase2.disc_width},
                     {"mapper_hidden", c.phase2.mapper_hidden},
                     {"gan", train::to_string(c.phase2.gan)},
                     {"steps", c.phase2.steps},
                     {"batch_rows", c.phase2.batch_rows},
                     {"lr", c.phase2.lr}};
    doc["infer"] = {{"beam", c.infer.beam}};
    doc["parse"] = {{"language", sg::to_string(c.parse.language)}};
    doc["gradcheck"] = {{"configs", c.gradcheck.configs}, {"max_dim", c.gradcheck.max_dim}};
    doc["paths"] = {{"data", c.paths.data},
                    {"phase1", c.paths.phase1},
                    {"phase2", c.paths.phase2},
                    {"input", c.paths.input},
                    {"predictions", c.paths.predictions},
                    {"references", c.paths.references}};
    return doc;
}

RunConfig apply_json(const json& doc, RunConfig c) {
    Section root(doc, "");
    root.read("seed", c.seed);
    root.read_enum("precision", c.precision, precision_from_string);
    {
        Section s = root.child("world");
        auto& w = c.world;
        s.read("n_objects", w.n_objects);
        s.read("n_relations", w.n_relations);
        s.read("n_attributes", w.n_attributes);
        s.read("homonym_count", w.homonym_count);
        s.read("contexts_per_sense", w.contexts_per_sense);
        s.read("paraphrases_per_sentence", w.paraphrases_per_sentence);
        s.read("embedding_dim", w.embedding_dim);
        s.read("homonym_rate", w.homonym_rate);
        s.read("neighbor_context_rate", w.neighbor_context_rate);
        s.read("no_context_rate", w.no_context_rate);
        s.read("attribute_rate", w.attribute_rate);
        Section n = s.child("noise");
        n.read("duplicate_triplet_rate", w.noise.duplicate_triplet_rate);
        n.read("spurious_object_rate", w.noise.spurious_object_rate);
        n.read("attribute_drop_rate", w.noise.attribute_drop_rate);
        n.finish();
        s.read("distortion_scale", w.distortion_scale);
        s.read("distortion_bias", w.distortion_bias);
        s.finish();
    }
    {
        Section s = root.child("data");
        s.read("train", c.data.train);
        s.read("val", c.data.val);
        s.read("test", c.data.test);
        s.read("images", c.data.images);
        s.finish();
    }
    {
        Section s = root.child("model");
        read_model(s, c.model);
        s.finish();
    }
    {
        Section s = root.child("phase1");
        auto& p = c.phase1;
        s.read("d_c", p.d_c);
        s.read("epochs_xe", p.epochs_xe);
        s.read("epochs_joint", p.epochs_joint);
        s.read("lr", p.lr);
        s.read("batch", p.batch);
        s.read("joint", p.joint);
        s.read("kl_weight", p.kl_weight);
        s.read("lr_end", p.lr_end);
        s.finish();
    }
    {
        Section s = root.child("phase2");
        auto& p = c.phase2;
        s.read("lambda", p.lambda);
        s.read("disc_width", p.disc_width);
        s.read("mapper_hidden", p.mapper_hidden);
        s.read_enum("gan", p.gan, train::gan_variant_from_string);
        s.read("steps", p.steps);
        s.read("batch_rows", p.batch_rows);
        s.read("lr", p.lr);
        s.finish();
    }
    {
        Section s = root.child("infer");
        s.read("beam", c.infer.beam);
        s.finish();
    }
    {
        Section s = root.child("parse");
        s.read_enum("language", c.parse.language, sg::language_from_string);
        s.finish();
    }
    {
        Section s = root.child("gradcheck");
        s.read("configs", c.gradcheck.configs);
        s.read("max_dim", c.gradcheck.max_dim);
        s.finish();
    }
    {
        Section s = root.child("paths");
        s.read("data", c.paths.data);
        s.read("phase1", c.paths.phase1);
        s.read("phase2", c.paths.phase2);
        s.read("input", c.paths.input);
        s.read("predictions", c.paths.predictions);
        s.read("references", c.paths.references);
        s.finish();
    }
    root.finish();
    return c;
}

RunConfig apply_override(const std::string& assignment, RunConfig base) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json patch = json::object();
    json* node = &patch;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("empty component in override key '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
    return apply_json(patch, std::move(base));
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
    if (doc.is_object() && doc.contains("command") && doc.contains("config")) {
        try {
            return apply_json(doc.at("config"), base);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("manifest ") + path + ": " + e.what());
        }
    }
    return apply_json(doc, base);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string config_hash(const RunConfig& config) { return hex64(fnv1a(to_json(config).dump())); }

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read file", path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a(bytes);
}

}  // namespace unison::cfg
