// Copyright (c) 2026, The unison-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "unison/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "unison/errors.hpp"

namespace unison::train {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

namespace {

std::string blob_name(std::size_t i) { return "t" + std::to_string(i) + ".bin"; }

}  // namespace

void write_checkpoint(const fs::path& dir, const num::ParamList& params, const nlohmann::ordered_json& metadata) {
    const bool f32 = num::precision() == num::Precision::f32;
    const fs::path tmp = dir.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    nlohmann::ordered_json manifest;
    manifest["format"] = checkpoint_format;
    manifest["dtype"] = f32 ? "float32" : "float64";
    manifest["metadata"] = metadata;
    auto& list = manifest["tensors"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = params[i];
        list.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"file", blob_name(i)}});
        std::ofstream out(tmp / blob_name(i), std::ios::binary);
        if (f32) {
            std::vector<float> v(t.data().begin(), t.data().end());
            out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
        } else {
            out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        }
        if (!out) throw FormatError("failed writing tensor blob", (tmp / blob_name(i)).string());
    }
    {
        std::ofstream out(tmp / "manifest.json");
        out << manifest.dump(2) << '\n';
        if (!out) throw FormatError("failed writing manifest", (tmp / "manifest.json").string());
    }
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

Checkpoint read_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ContractError("checkpoint directory '" + dir.string() + "' does not exist");
    const fs::path mpath = dir / "manifest.json";
    std::ifstream in(mpath);
    if (!in) throw FormatError("missing manifest", mpath.string());
    nlohmann::ordered_json manifest;
    try {
        manifest = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid manifest JSON: ") + e.what(), mpath.string());
    }
    if (manifest.value("format", "") != checkpoint_format)
        throw FormatError("unrecognized checkpoint format '" + manifest.value("format", "") + "'", mpath.string());
    const std::string dtype = manifest.value("dtype", "");
    if (dtype != "float32" && dtype != "float64") throw FormatError("unknown dtype '" + dtype + "'", mpath.string());
    const std::size_t width = dtype == "float32" ? sizeof(float) : sizeof(double);

    Checkpoint ckpt;
    ckpt.metadata = manifest.value("metadata", nlohmann::ordered_json::object());
    for (const auto& entry : manifest.at("tensors")) {
        StoredTensor t;
        const std::string name = entry.at("name").get<std::string>();
        t.rows = entry.at("shape").at(0).get<std::size_t>();
        t.cols = entry.at("shape").at(1).get<std::size_t>();
        const fs::path blob = dir / entry.at("file").get<std::string>();
        std::ifstream b(blob, std::ios::binary | std::ios::ate);
        if (!b) throw FormatError("missing tensor blob for '" + name + "'", blob.string());
        const auto bytes = static_cast<std::size_t>(b.tellg());
        if (bytes != t.rows * t.cols * width)
            throw FormatError("blob size " + std::to_string(bytes) + " does not match shape of '" + name + "'", blob.string());
        b.seekg(0);
        std::vector<char> raw(bytes);
        b.read(raw.data(), static_cast<std::streamsize>(bytes));
        t.values.resize(t.rows * t.cols);
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            if (width == sizeof(float)) {
                float f;
                std::memcpy(&f, raw.data() + i * width, width);
                t.values[i] = f;
            } else {
                std::memcpy(&t.values[i], raw.data() + i * width, width);
            }
        }
        ckpt.tensors.emplace(name, std::move(t));
    }
    return ckpt;
}

void Checkpoint::load_into(const num::ParamList& params) const {
    for (const auto& [name, param] : params) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'", "");
        if (it->second.rows != param.rows() || it->second.cols != param.cols())
            throw FormatError("shape mismatch for '" + name + "'", "");
        num::Tensor t = param;
        std::copy(it->second.values.begin(), it->second.values.end(), t.mutable_data().begin());
    }
}

bool Checkpoint::contains_all(const num::ParamList& params) const {
    for (const auto& [name, param] : params)
        if (!tensors.contains(name)) return false;
    return true;
}

}  // namespace unison::train
