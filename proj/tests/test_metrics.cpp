// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "phred/evaluation.hpp"
#include "phred/metrics.hpp"
#include "metric_oracles.hpp"
#include "toy_model.hpp"

using namespace phred;
using namespace phred::testing;
using Catch::Matchers::WithinAbs;

namespace {

Sentence words(const std::string& s) {
    Sentence out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

}  // namespace

TEST_CASE("BLEU worked examples", "[metrics]") {
    CHECK_THAT(bleu({words("a b c")}, {words("a b d")}, 2), WithinAbs(std::sqrt(1.0 / 3.0), 1e-12));
    CHECK_THAT(bleu({words("a b c")}, {words("a b d")}, 2), WithinAbs(0.5774, 5e-5));
    CHECK_THAT(bleu({words("x y z w")}, {words("x y z w")}, 4), WithinAbs(1.0, 1e-12));
    CHECK_THAT(bleu({words("a b")}, {words("a b c d")}, 1), WithinAbs(std::exp(1.0 - 2.0), 1e-12));
    CHECK_THROWS_AS(bleu({words("a")}, {}, 1), std::invalid_argument);
}

TEST_CASE("ROUGE-2, distinct-n and NASL worked examples", "[metrics]") {
    CHECK_THAT(rouge2_f1({words("a b c")}, {words("a b d")}), WithinAbs(0.5, 1e-12));
    CHECK(rouge2_f1({words("a")}, {words("a b")}) == 0.0);
    CHECK_THAT(distinct_n({words("a a a")}, 1), WithinAbs(1.0 / 3.0, 1e-12));
    CHECK_THAT(distinct_n({words("a b"), words("a b")}, 2), WithinAbs(0.5, 1e-12));
    CHECK_THAT(nasl({words("a b c"), words("a b c d e")}, {words("a b c d e f"), words("a b c d e")}), WithinAbs(0.75, 1e-12));
    CHECK_THAT(nasl({words("a b")}, {words("c d")}), WithinAbs(1.0, 1e-12));
    CHECK_THROWS(nasl({words("a")}, {Sentence{}}));
    CHECK_THAT(perplexity_from_nll(10 * std::log(4.0), 10), WithinAbs(4.0, 1e-12));
}

TEST_CASE("metrics agree with brute-force oracles on random cases", "[metrics][oracle]") {
    std::mt19937 gen(20240611);
    for (int trial = 0; trial < 20; ++trial) {
        const RandomCase c = random_case(gen);
        CAPTURE(trial);
        for (int n = 1; n <= 4; ++n) CHECK_THAT(bleu(c.hyp, c.ref, n), WithinAbs(oracle_bleu(c.hyp, c.ref, n), 1e-9));
        CHECK_THAT(rouge2_f1(c.hyp, c.ref), WithinAbs(oracle_rouge2(c.hyp, c.ref), 1e-9));
        for (int n = 1; n <= 2; ++n) CHECK_THAT(distinct_n(c.hyp, n), WithinAbs(oracle_distinct(c.hyp, n), 1e-9));
        double ratio = 0;
        for (std::size_t i = 0; i < c.hyp.size(); ++i) ratio += static_cast<double>(c.hyp[i].size()) / static_cast<double>(c.ref[i].size());
        CHECK_THAT(nasl(c.hyp, c.ref), WithinAbs(ratio / static_cast<double>(c.hyp.size()), 1e-9));

        std::vector<double> probs(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 12)(gen)));
        for (double& p : probs) p = std::uniform_real_distribution<double>(0.05, 1.0)(gen);
        long double product = 1;
        double nll = 0;
        for (double p : probs) product *= p, nll -= std::log(p);
        const double expected = static_cast<double>(std::pow(product, -1.0L / static_cast<long double>(probs.size())));
        CHECK_THAT(perplexity_from_nll(nll, static_cast<double>(probs.size())), WithinAbs(expected, 1e-9));
    }
}

TEST_CASE("teacher-forced perplexity matches step-by-step decoding", "[metrics][oracle]") {
    using namespace phred::testing;
    std::mt19937 gen(77);
    for (int trial = 0; trial < 20; ++trial) {
        CAPTURE(trial);
        Config cfg = toy_config(Variant::phredgan_a);
        cfg.seed = static_cast<std::uint64_t>(trial + 1);
        const PhredModel model(cfg, toy_vocabulary(), toy_attributes());
        std::vector<Conversation> convs;
        for (int c = 0; c < 3; ++c) {
            Conversation conv;
            conv.id = "r" + std::to_string(c);
            const int turns = std::uniform_int_distribution<int>(2, 3)(gen);
            for (int t = 0; t < turns; ++t) {
                Turn turn;
                turn.attribute = std::uniform_int_distribution<int>(0, 1)(gen);
                turn.tokens.resize(static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 5)(gen)));
                for (int& w : turn.tokens) w = std::uniform_int_distribution<int>(4, 7)(gen);
                conv.turns.push_back(turn);
            }
            convs.push_back(conv);
        }
        const NoiseSpec silent = model.noise(0.0);
        const auto got = teacher_forced_perplexity(model, convs, silent, 3);

        NoGradGuard no_grad;
        CounterRng rng(1, 1);
        const Tensor z = sample_noise(silent, 1, 1, rng).front();
        double nll = 0, tokens = 0;
        for (const auto& conv : convs) {
            for (std::size_t i = 1; i < conv.turns.size(); ++i) {
                const std::vector<Turn> context(conv.turns.begin(), conv.turns.begin() + static_cast<std::ptrdiff_t>(i));
                const ContextState state = encode_context(model, context);
                const std::vector<int> gold = prepare_turn(conv.turns[i].tokens, cfg.max_len);
                const std::vector<int> target{conv.turns[i].attribute};
                std::vector<Tensor> hidden = state.hidden;
                int previous = Vocabulary::bos;
                for (int word : gold) {
                    const std::vector<int> prev{previous};
                    const DecodeResult step = model.generator().decode_step(state, prev, target, z, hidden);
                    double max = -1e300, sum = 0;
                    for (int k = 0; k < step.logits.cols(); ++k) max = std::max(max, static_cast<double>(step.logits.at(0, k)));
                    for (int k = 0; k < step.logits.cols(); ++k) sum += std::exp(step.logits.at(0, k) - max);
                    nll += -(step.logits.at(0, word) - max - std::log(sum));
                    tokens += 1;
                    hidden = step.hidden;
                    previous = word;
                }
            }
        }
        CHECK(got.tokens == tokens);
        // Batched and single-row float arithmetic differ in rounding only.
        CHECK_THAT(got.total_nll, WithinAbs(nll, 1e-4 * tokens));
        CHECK_THAT(got.perplexity, WithinAbs(std::exp(nll / tokens), 1e-4 * got.perplexity));
        CHECK_THAT(got.perplexity, WithinAbs(perplexity_from_nll(got.total_nll, got.tokens), 1e-12));
    }
}

TEST_CASE("human evaluation aggregation", "[metrics][human]") {
    SECTION("worked examples") {
        const auto top = human_eval_aggregate({{{1, 0}, {1, 0}}, {{1, 0}, {1, 0}}});
        CHECK(top[0].mean == 1.0);
        CHECK(top[0].std_error == 0.0);
        CHECK_THAT(human_eval_aggregate({{{0, 1, 2}}})[1].mean, WithinAbs(0.5, 1e-12));
    }
    SECTION("2 samples x 2 judges x 3 models, hand computed") {
        const auto s = human_eval_aggregate({{{2, 1, 0}, {1, 2, 0}}, {{2, 0, 1}, {2, 1, 0}}});
        REQUIRE(s.size() == 3);
        CHECK_THAT(s[0].mean, WithinAbs(0.875, 1e-12));
        CHECK_THAT(s[0].std_error, WithinAbs(0.125, 1e-12));
        CHECK_THAT(s[1].mean, WithinAbs(0.5, 1e-12));
        CHECK_THAT(s[1].std_error, WithinAbs(0.17677669529663687, 1e-12));
        CHECK_THAT(s[2].mean, WithinAbs(0.125, 1e-12));
        CHECK_THAT(s[2].std_error, WithinAbs(0.125, 1e-12));
    }
    SECTION("ties and ragged input are rejected") {
        CHECK_THROWS_AS(human_eval_aggregate({{{1, 1, 0}}}), std::invalid_argument);
        CHECK_THROWS_AS(human_eval_aggregate({{{0, 1}, {0, 1, 2}}}), std::invalid_argument);
        CHECK_THROWS_AS(human_eval_aggregate({}), std::invalid_argument);
    }
}

TEST_CASE("evaluation report of identical files has unit BLEU", "[metrics]") {
    const std::vector<Sentence> h{words("a b c d"), words("e f g h")};
    const EvalReport r = evaluate_text(h, h);
    CHECK_THAT(r.bleu2, WithinAbs(1.0, 1e-12));
    CHECK_THAT(r.bleu4, WithinAbs(1.0, 1e-12));
    CHECK_THAT(r.rouge2_f1, WithinAbs(1.0, 1e-12));
    CHECK(r.samples == 2);
    CHECK(r.to_json().at("perplexity").is_null());
}
