// SPDX-License-Identifier: Apache-2.0

#include "phred/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <unistd.h>

namespace phred {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::array<char, 4> kMagic{'P', 'H', 'R', 'T'};
constexpr std::uint32_t kFloat32 = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in, const fs::path& path) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) throw CheckpointError("truncated tensor blob " + path.string());
    return v;
}

std::string blob_name(const std::string& param) { return param + ".bin"; }

}  // namespace

void write_tensor_blob(const fs::path& path, const Tensor& tensor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(kMagic.data(), 4);
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    put_u32(out, kFloat32);
    put_u32(out, 0);
    for (int e : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    std::vector<float> values(tensor.values().begin(), tensor.values().end());
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!out) throw CheckpointError("failed writing " + path.string());
}

Tensor read_tensor_blob(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open tensor blob " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kMagic) throw CheckpointError("bad magic in " + path.string());
    const std::uint32_t rank = get_u32(in, path);
    const std::uint32_t dtype = get_u32(in, path);
    get_u32(in, path);
    if (dtype != kFloat32) throw CheckpointError("unsupported dtype tag " + std::to_string(dtype) + " in " + path.string());
    if (rank > 8) throw CheckpointError("implausible rank in " + path.string());
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get_u32(in, path)));
    std::vector<float> values(shape_numel(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)))) {
        throw CheckpointError("truncated tensor data in " + path.string());
    }
    return Tensor::from(shape, std::vector<real>(values.begin(), values.end()));
}

void save_checkpoint(const PhredModel& model, const fs::path& dir, long step, const ordered_json& extra) {
    const fs::path target = fs::absolute(dir);
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp-" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    ordered_json manifest;
    manifest["format"] = "phred-checkpoint";
    manifest["version"] = 1;
    manifest["step"] = step;
    manifest["variant"] = to_string(model.variant());
    manifest["config"] = model.config().to_json();
    manifest["vocabulary_fingerprint"] = model.vocabulary().fingerprint();
    manifest["attribute_fingerprint"] = model.attributes().fingerprint();
    manifest["parameters"] = ordered_json::array();
    for (const auto& e : model.parameters().entries()) {
        write_tensor_blob(tmp / blob_name(e.name), e.tensor);
        manifest["parameters"].push_back(
            {{"name", e.name}, {"shape", e.tensor.shape()}, {"group", to_string(e.group)}, {"file", blob_name(e.name)}});
    }
    if (!extra.is_null()) manifest["extra"] = extra;
    model.vocabulary().save(tmp / "vocab.txt");
    model.attributes().save(tmp / "attributes.txt");
    {
        std::ofstream out(tmp / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << '\n';
        if (!out) throw CheckpointError("failed writing manifest in " + tmp.string());
    }
    fs::remove_all(target);
    fs::create_directories(target.parent_path());
    fs::rename(tmp, target);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw CheckpointError("no checkpoint at " + dir.string());
    LoadedCheckpoint out;
    try {
        std::ifstream in(dir / "manifest.json");
        out.manifest = json::parse(in);
        if (out.manifest.value("format", "") != "phred-checkpoint") throw CheckpointError("not a checkpoint manifest");
        out.step = out.manifest.at("step").get<long>();
        const Config config = Config::from_json(out.manifest.at("config"));
        Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
        AttributeVocabulary attrs = AttributeVocabulary::load(dir / "attributes.txt");
        if (vocab.fingerprint() != out.manifest.at("vocabulary_fingerprint").get<std::string>()) {
            throw CheckpointError("vocabulary fingerprint mismatch");
        }
        if (attrs.fingerprint() != out.manifest.at("attribute_fingerprint").get<std::string>()) {
            throw CheckpointError("attribute fingerprint mismatch");
        }
        out.model = std::make_unique<PhredModel>(config, std::move(vocab), std::move(attrs));
        const auto& listed = out.manifest.at("parameters");
        auto& entries = out.model->parameters().entries();
        if (listed.size() != entries.size()) {
            throw CheckpointError("checkpoint lists " + std::to_string(listed.size()) + " parameters, model has " +
                                  std::to_string(entries.size()));
        }
        for (std::size_t i = 0; i < entries.size(); ++i) {
            auto& entry = entries[i];
            if (listed[i].at("name").get<std::string>() != entry.name) {
                throw CheckpointError("parameter order mismatch at " + entry.name);
            }
            const Tensor loaded = read_tensor_blob(dir / listed[i].at("file").get<std::string>());
            if (loaded.shape() != entry.tensor.shape()) {
                throw CheckpointError("shape mismatch for " + entry.name + ": " + shape_to_string(loaded.shape()) +
                                      " vs " + shape_to_string(entry.tensor.shape()));
            }
            auto dst = entry.tensor.mutable_values();
            std::copy(loaded.values().begin(), loaded.values().end(), dst.begin());
        }
    } catch (const json::exception& e) {
        throw CheckpointError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw CheckpointError("checkpoint config in " + dir.string() + " is invalid: " + e.what());
    }
    return out;
}

}  // namespace phred
