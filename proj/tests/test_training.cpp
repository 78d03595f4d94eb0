// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <limits>

#include "phred/checkpoint.hpp"
#include "phred/evaluation.hpp"
#include "phred/training.hpp"
#include "test_support.hpp"
#include "toy_model.hpp"

using namespace phred;
using namespace phred::testing;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<real> snapshot(const ParameterStore& store, ParamGroup group) {
    std::vector<real> out;
    for (const auto& e : store.entries()) {
        if (e.group == group) out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
    }
    return out;
}

std::vector<Conversation> repeated_toy(int copies) {
    std::vector<Conversation> out;
    for (int i = 0; i < copies; ++i) {
        for (auto c : toy_conversations()) {
            c.id += "-" + std::to_string(i);
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace

// ---- config ------------------------------------------------------------------------

TEST_CASE("config defaults follow the variant", "[config]") {
    const auto d = Config::from_json(nlohmann::json::parse(R"({"variant":"phredgan_d"})"));
    CHECK(d.lambda_g_att == 1.0);
    CHECK(d.lambda_g_adv == 1.0);
    CHECK(d.lambda_m == 1.0);
    CHECK(d.acc_d_threshold == 0.99);
    CHECK(d.acc_g_threshold == 0.75);
    CHECK(d.clip_norm == 5.0);
    CHECK(Config::from_json(nlohmann::json::parse(R"({"variant":"phredgan_a"})")).lambda_g_att == 0.0);
}

TEST_CASE("config rejects unknown keys by name", "[config]") {
    CHECK_THROWS_WITH(Config::from_json(nlohmann::json::parse(R"({"hiden_size":3,"lr":1,"epochs":2})")),
                      ContainsSubstring("hiden_size") && ContainsSubstring("lr"));
}

TEST_CASE("config rejects invalid values", "[config]") {
    CHECK_THROWS_WITH(Config::from_json(nlohmann::json::parse(R"({"variant":"phredgan_a","lambda_g_att":0.5})")),
                      ContainsSubstring("lambda_g_att"));
    CHECK_THROWS_WITH(Config::from_json(nlohmann::json::parse(R"({"variant":"foo"})")),
                      ContainsSubstring("phredgan_d"));
    CHECK_THROWS(Config::from_json(nlohmann::json::parse(R"({"acc_d_threshold":0})")));
    CHECK_THROWS(Config::from_json(nlohmann::json::parse(R"({"noise_mode":"sentence"})")));
    CHECK_THROWS(Config::from_json(nlohmann::json::parse(R"({"layers":"two"})")));
}

TEST_CASE("config survives a JSON round trip", "[config]") {
    Config c = toy_config(Variant::phredgan_a);
    c.noise_mode = NoiseMode::word;
    const Config back = Config::from_json(nlohmann::json::parse(c.to_json().dump()));
    CHECK(back.to_json() == c.to_json());
}

// ---- gating ------------------------------------------------------------------------

TEST_CASE("gating follows the accuracy thresholds", "[training][gating]") {
    const auto hi = decide_updates(Variant::phredgan_d, 0.995, 0.99, 0.75);
    CHECK_FALSE(hi.update_discriminator);
    CHECK(hi.generator == GeneratorMode::full);
    const auto mid = decide_updates(Variant::phredgan_d, 0.80, 0.99, 0.75);
    CHECK(mid.update_discriminator);
    CHECK(mid.generator == GeneratorMode::full);
    const auto lo = decide_updates(Variant::phredgan_d, 0.50, 0.99, 0.75);
    CHECK(lo.update_discriminator);
    CHECK(lo.generator == GeneratorMode::mle_only);
    const auto p = decide_updates(Variant::phred, 0.995, 0.99, 0.75);
    CHECK_FALSE(p.update_discriminator);
    CHECK(p.generator == GeneratorMode::mle_only);
}

TEST_CASE("scripted accuracies drive the update pattern of real steps", "[training][gating]") {
    Config cfg = toy_config(Variant::phredgan_d);
    cfg.epochs = 3;
    PhredModel model(cfg, toy_vocabulary(), toy_attributes());
    const std::vector<double> script{0.995, 0.80, 0.50};
    TrainOptions opt;
    opt.max_steps = 3;
    opt.accuracy_override = [&](long step) -> std::optional<double> { return script[static_cast<std::size_t>(step)]; };
    std::vector<bool> d_moved;
    auto d0 = snapshot(model.parameters(), ParamGroup::adv_discriminator);
    opt.on_step = [&](const StepRecord&) {
        auto d1 = snapshot(model.parameters(), ParamGroup::adv_discriminator);
        d_moved.push_back(d1 != d0);
        d0 = d1;
    };
    const auto report = train(model, toy_conversations(), opt);
    REQUIRE(report.steps.size() == 3);
    CHECK_FALSE(report.steps[0].d_updated);
    CHECK(report.steps[0].g_mode == GeneratorMode::full);
    CHECK(report.steps[1].d_updated);
    CHECK(report.steps[1].g_mode == GeneratorMode::full);
    CHECK(report.steps[2].d_updated);
    CHECK(report.steps[2].g_mode == GeneratorMode::mle_only);
    CHECK(d_moved == std::vector<bool>{false, true, true});
}

TEST_CASE("every step records exactly one generator mode and a consistent D flag", "[training][gating]") {
    auto model = toy_model(Variant::phredgan_a);
    TrainOptions opt;
    opt.max_steps = 6;
    const auto report = train(*model, repeated_toy(2), opt);
    for (const auto& s : report.steps) {
        CHECK((s.g_mode == GeneratorMode::mle_only || s.g_mode == GeneratorMode::full));
        CHECK(s.d_updated == (s.accuracy < model->config().acc_d_threshold));
        CHECK((s.g_mode == GeneratorMode::mle_only) == (s.accuracy < model->config().acc_g_threshold));
        CHECK(s.d_att == 0);
    }
}

TEST_CASE("phred trains on MLE alone", "[training]") {
    auto model = toy_model(Variant::phred);
    TrainOptions opt;
    opt.max_steps = 3;
    for (const auto& s : train(*model, toy_conversations(), opt).steps) {
        CHECK(s.g_mode == GeneratorMode::mle_only);
        CHECK_FALSE(s.d_updated);
        CHECK(s.accuracy == -1);
    }
}

TEST_CASE("a discriminator-only change moves shared parameters, not the decoder", "[training]") {
    auto model = toy_model(Variant::phredgan_d);
    auto& store = model->parameters();
    const Batch batch = toy_batch();
    CounterRng rng(4);
    const auto losses = compute_batch_losses(*model, batch, model->training_noise(), rng);
    store.zero_grad();
    backward(discriminator_objective(losses));
    bool shared_grad = false, decoder_grad = false;
    for (const auto& e : store.entries()) {
        double n = 0;
        if (e.tensor.has_grad()) {
            for (real g : e.tensor.grad()) n += std::abs(g);
        }
        if (e.name.rfind("shared.utterance_rnn", 0) == 0 && n > 0) shared_grad = true;
        if (e.group == ParamGroup::generator && n > 0) decoder_grad = true;
    }
    CHECK(shared_grad);
    CHECK_FALSE(decoder_grad);
}

TEST_CASE("phredgan_a never evaluates the attribute discriminator", "[training]") {
    auto model = toy_model(Variant::phredgan_a);
    CounterRng rng(4);
    const auto losses = compute_batch_losses(*model, toy_batch(), model->training_noise(), rng);
    CHECK_FALSE(losses.d_att.defined());
    CHECK_FALSE(losses.g_att.defined());
    CHECK(losses.d_adv.defined());
}

TEST_CASE("same seed and config give identical loss curves", "[training][determinism]") {
    auto run = [] {
        auto model = toy_model(Variant::phredgan_d);
        TrainOptions opt;
        opt.max_steps = 5;
        std::vector<double> curve;
        for (const auto& s : train(*model, repeated_toy(2), opt).steps) {
            curve.insert(curve.end(), {s.mle, s.d_adv, s.g_adv, s.d_att, s.g_att, s.accuracy});
        }
        return curve;
    };
    CHECK(run() == run());
}

TEST_CASE("training writes a step log and a final snapshot", "[training]") {
    TempDir dir;
    auto model = toy_model(Variant::hredgan);
    TrainOptions opt;
    opt.out_dir = dir.path();
    opt.max_steps = 2;
    const auto report = train(*model, toy_conversations(), opt);
    CHECK(std::filesystem::exists(dir / "train_log.jsonl"));
    CHECK(std::filesystem::exists(dir / "snapshot" / "manifest.json"));
    const auto log = read_file(dir / "train_log.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 2);
    CHECK(report.checkpoints.back() == dir / "snapshot");
}

TEST_CASE("non-finite loss aborts training with a checkpoint", "[training]") {
    TempDir dir;
    auto model = toy_model(Variant::phredgan_d);
    auto& store = model->parameters();
    for (auto& e : store.entries()) {
        if (e.name == "generator.output.bias") e.tensor.mutable_values()[0] = std::numeric_limits<real>::quiet_NaN();
    }
    TrainOptions opt;
    opt.out_dir = dir.path();
    const auto report = train(*model, toy_conversations(), opt);
    CHECK(report.aborted);
    CHECK_THAT(report.abort_reason, ContainsSubstring("non-finite"));
    CHECK(std::filesystem::exists(dir / "diverged" / "manifest.json"));
    CHECK_FALSE(std::filesystem::exists(dir / "snapshot"));
}

TEST_CASE("checkpoint round trip reproduces the forward pass bitwise", "[checkpoint]") {
    TempDir dir;
    auto model = toy_model(Variant::phredgan_d);
    TrainOptions opt;
    opt.max_steps = 3;
    train(*model, toy_conversations(), opt);
    save_checkpoint(*model, dir / "ckpt", 3);
    const auto loaded = load_checkpoint(dir / "ckpt");
    CHECK(loaded.step == 3);
    for (const auto& variant_batch : {toy_batch()}) {
        CounterRng a(9), b(9);
        const auto x = compute_batch_losses(*model, variant_batch, model->training_noise(), a);
        const auto y = compute_batch_losses(*loaded.model, variant_batch, loaded.model->training_noise(), b);
        CHECK(x.mle.item() == y.mle.item());
        CHECK(x.d_adv.item() == y.d_adv.item());
        CHECK(x.g_att.item() == y.g_att.item());
    }
    const auto& pa = model->parameters().entries();
    const auto& pb = loaded.model->parameters().entries();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()));
    }
}

TEST_CASE("tensor blobs have the documented layout", "[checkpoint]") {
    TempDir dir;
    const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6.5f});
    write_tensor_blob(dir / "t.bin", t);
    const std::string bytes = read_file(dir / "t.bin");
    REQUIRE(bytes.size() == 16 + 2 * 4 + 6 * 4);
    CHECK(bytes.substr(0, 4) == "PHRT");
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 1);
    CHECK(bytes[16] == 2);
    CHECK(bytes[20] == 3);
    float last = 0;
    std::memcpy(&last, bytes.data() + bytes.size() - 4, 4);
    CHECK(last == 6.5f);
    const Tensor back = read_tensor_blob(dir / "t.bin");
    CHECK(back.shape() == t.shape());
    CHECK(std::equal(back.values().begin(), back.values().end(), t.values().begin()));
}

TEST_CASE("corrupt checkpoints are reported", "[checkpoint]") {
    TempDir dir;
    CHECK_THROWS_AS(load_checkpoint(dir.path()), CheckpointError);
    auto model = toy_model(Variant::phred);
    save_checkpoint(*model, dir / "c", 0);
    write_file(dir / "c" / "vocab.txt", "<pad>\n<unk>\n</s>\n<s>\nzz\n");
    CHECK_THROWS_WITH(load_checkpoint(dir / "c"), ContainsSubstring("fingerprint"));
    save_checkpoint(*model, dir / "c", 0);
    write_file(dir / "c" / "generator.output.weight.bin", "PHRT");
    CHECK_THROWS_AS(load_checkpoint(dir / "c"), CheckpointError);
}

TEST_CASE("phred memorises a ten-conversation corpus", "[training][slow]") {
    SyntheticSpec spec;
    spec.conversations = 10;
    spec.seed = 3;
    spec.valid_fraction = 0;
    spec.test_fraction = 0;
    spec.signature_rate = 0.5;
    TempDir dir;
    write_synthetic_corpus(dir.path(), generate_synthetic_persona_corpus(spec));
    const Corpus corpus = ingest(dir.path());
    Config cfg = Config::for_variant(Variant::phred);
    cfg.epochs = 500;
    cfg.batch_size = 10;
    cfg.log_every = 0;
    PhredModel model(cfg, corpus.vocabulary, corpus.attributes);
    double ppl = 0;
    TrainOptions opt;
    opt.on_epoch = [&](int epoch) {
        if (epoch % 10 != 9) return true;
        ppl = teacher_forced_perplexity(model, corpus.train, model.training_noise(), 1).perplexity;
        return ppl >= 1.5;
    };
    train(model, corpus.train, opt);
    CHECK(ppl < 1.5);
}
