// SPDX-License-Identifier: Apache-2.0

#include "phred/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace phred {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(Variant variant) {
    switch (variant) {
        case Variant::phred: return "phred";
        case Variant::hredgan: return "hredgan";
        case Variant::phredgan_a: return "phredgan_a";
        case Variant::phredgan_d: return "phredgan_d";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (Variant v : {Variant::phred, Variant::hredgan, Variant::phredgan_a, Variant::phredgan_d}) {
        if (name == to_string(v)) return v;
    }
    throw ConfigError("unknown variant '" + std::string(name) + "' (valid: " + kVariantNames + ")");
}

bool has_adv_discriminator(Variant v) { return v != Variant::phred; }
bool has_att_discriminator(Variant v) { return v == Variant::phredgan_d; }
bool uses_attributes(Variant v) { return v != Variant::hredgan; }

const char* to_string(NoiseMode mode) { return mode == NoiseMode::utterance ? "utterance" : "word"; }

namespace {

NoiseMode parse_noise_mode(const std::string& s) {
    if (s == "utterance") return NoiseMode::utterance;
    if (s == "word") return NoiseMode::word;
    throw ConfigError("noise_mode must be 'utterance' or 'word', got '" + s + "'");
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace

Config Config::for_variant(Variant v) {
    Config c;
    c.variant = v;
    if (v != Variant::phredgan_d) c.lambda_g_att = 0.0;
    return c;
}

void Config::validate() const {
    require(vocab_size >= 5, "vocab_size must be at least 5");
    require(max_len >= 2, "max_len must be at least 2");
    require(max_turns >= 2, "max_turns must be at least 2");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(layers >= 1, "layers must be at least 1");
    require(hidden_size >= 1 && embedding_size >= 1 && attribute_size >= 1 && attention_size >= 1,
            "model dimensions must be positive");
    require(std::isfinite(noise_std) && noise_std >= 0, "noise_std must be a nonnegative number");
    require(lambda_g_adv >= 0 && lambda_g_att >= 0 && lambda_m >= 0, "loss weights must be nonnegative");
    require(acc_d_threshold > 0 && acc_d_threshold <= 1, "acc_d_threshold must lie in (0, 1]");
    require(acc_g_threshold > 0 && acc_g_threshold <= 1, "acc_g_threshold must lie in (0, 1]");
    require(learning_rate > 0, "learning_rate must be positive");
    require(clip_norm > 0, "clip_norm must be positive");
    require(epochs >= 0, "epochs must be nonnegative");
    require(checkpoint_every >= 0 && log_every >= 0, "checkpoint_every and log_every must be nonnegative");
    require(!(variant == Variant::phredgan_a && lambda_g_att != 0),
            "phredgan_a has no attribute discriminator: lambda_g_att must be 0");
}

ordered_json Config::to_json() const {
    ordered_json j;
    j["variant"] = to_string(variant);
    j["vocab_size"] = vocab_size;
    j["max_len"] = max_len;
    j["max_turns"] = max_turns;
    j["batch_size"] = batch_size;
    j["layers"] = layers;
    j["hidden_size"] = hidden_size;
    j["embedding_size"] = embedding_size;
    j["attribute_size"] = attribute_size;
    j["attention_size"] = attention_size;
    j["noise_mode"] = to_string(noise_mode);
    j["noise_std"] = noise_std;
    j["lambda_g_adv"] = lambda_g_adv;
    j["lambda_g_att"] = lambda_g_att;
    j["lambda_m"] = lambda_m;
    j["acc_d_threshold"] = acc_d_threshold;
    j["acc_g_threshold"] = acc_g_threshold;
    j["learning_rate"] = learning_rate;
    j["clip_norm"] = clip_norm;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["checkpoint_every"] = checkpoint_every;
    j["log_every"] = log_every;
    return j;
}

Config Config::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known = {
        "variant",         "vocab_size",      "max_len",        "max_turns",      "batch_size",   "layers",
        "hidden_size",     "embedding_size",  "attribute_size", "attention_size", "noise_mode",   "noise_std",
        "lambda_g_adv",    "lambda_g_att",    "lambda_m",       "acc_d_threshold", "acc_g_threshold",
        "learning_rate",   "clip_norm",       "epochs",         "seed",           "checkpoint_every", "log_every"};
    std::string unknown;
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    }
    if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);

    Config c;
    try {
        if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("vocab_size", c.vocab_size);
        get("max_len", c.max_len);
        get("max_turns", c.max_turns);
        get("batch_size", c.batch_size);
        get("layers", c.layers);
        get("hidden_size", c.hidden_size);
        get("embedding_size", c.embedding_size);
        get("attribute_size", c.attribute_size);
        get("attention_size", c.attention_size);
        if (j.contains("noise_mode")) c.noise_mode = parse_noise_mode(j.at("noise_mode").get<std::string>());
        get("noise_std", c.noise_std);
        get("lambda_g_adv", c.lambda_g_adv);
        get("lambda_m", c.lambda_m);
        if (j.contains("lambda_g_att")) {
            c.lambda_g_att = j.at("lambda_g_att").get<double>();
        } else if (c.variant != Variant::phredgan_d) {
            c.lambda_g_att = 0.0;
        }
        get("acc_d_threshold", c.acc_d_threshold);
        get("acc_g_threshold", c.acc_g_threshold);
        get("learning_rate", c.learning_rate);
        get("clip_norm", c.clip_norm);
        get("epochs", c.epochs);
        get("seed", c.seed);
        get("checkpoint_every", c.checkpoint_every);
        get("log_every", c.log_every);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
    c.validate();
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

}  // namespace phred
