// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>

#include "phred/inference.hpp"
#include "phred/training.hpp"
#include "toy_model.hpp"

using namespace phred;
using namespace phred::testing;
using Catch::Matchers::WithinAbs;

namespace {

// Briefly trained toy model so candidates are not all identical.
std::unique_ptr<PhredModel> trained(Variant v) {
    Config cfg = toy_config(v);
    cfg.hidden_size = 6;
    cfg.embedding_size = 4;
    cfg.epochs = 20;
    auto model = std::make_unique<PhredModel>(cfg, toy_vocabulary(), toy_attributes());
    train(*model, toy_conversations());
    return model;
}

GenerationRequest request(int candidates, double alpha, std::uint64_t seed = 1) {
    GenerationRequest r;
    r.context = toy_conversations()[1].turns;
    r.context.pop_back();
    r.target_attribute = 1;
    r.num_candidates = candidates;
    r.alpha = alpha;
    r.max_len = 6;
    r.seed = seed;
    return r;
}

}  // namespace

TEST_CASE("rank score examples", "[inference]") {
    CHECK_THAT(rank_score(Variant::phredgan_a, (std::log(0.5) + std::log(0.5)) / 2, std::nullopt, 2),
               WithinAbs(-0.6931471805599453, 1e-12));
    // Variant d: per-word attribute confidence -0.6931 (log-confidence over one word).
    CHECK_THAT(rank_score(Variant::phredgan_d, std::log(0.5), std::log(0.5), 1), WithinAbs(std::log(0.5), 1e-12));
    CHECK_THAT(rank_score(Variant::phredgan_d, -1.0, -4.0, 4), WithinAbs(-1.0, 1e-12));
    CHECK(rank_score(Variant::hredgan, std::log(0.6), std::nullopt, 3) > rank_score(Variant::hredgan, std::log(0.5), std::nullopt, 3));
}

TEST_CASE("one candidate when L is 1", "[inference]") {
    auto m = trained(Variant::phredgan_d);
    CHECK(generate(*m, request(1, 1.0)).size() == 1);
}

TEST_CASE("zero noise makes every candidate identical", "[inference]") {
    auto m = trained(Variant::phredgan_a);
    const auto c = generate(*m, request(8, 0.0));
    REQUIRE(c.size() == 8);
    for (const auto& x : c) CHECK(x.tokens == c.front().tokens);
}

TEST_CASE("candidates are sorted, scored consistently and end at EOS", "[inference]") {
    for (Variant v : {Variant::hredgan, Variant::phredgan_a, Variant::phredgan_d}) {
        auto m = trained(v);
        const auto c = generate(*m, request(16, 5.0));
        REQUIRE(c.size() == 16);
        for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i - 1].rank_score >= c[i].rank_score);
        CHECK(c.front().rank_score >= c[c.size() / 2].rank_score);
        for (const auto& x : c) {
            REQUIRE_FALSE(x.tokens.empty());
            const auto eos = std::find(x.tokens.begin(), x.tokens.end(), Vocabulary::eos);
            CHECK((eos == x.tokens.end() ? x.tokens.size() == 6 : eos + 1 == x.tokens.end()));
            CHECK(x.word_probs.size() == x.tokens.size());
            double mean = 0;
            for (double p : x.word_probs) mean += std::log(std::clamp(p, 1e-7, 1 - 1e-7));
            mean /= static_cast<double>(x.word_probs.size());
            CHECK_THAT(x.adv_score, WithinAbs(mean, 1e-9));
            CHECK(x.rank_score == rank_score(v, x.adv_score, x.att_log_confidence, x.tokens.size()));
            CHECK(x.att_log_confidence.has_value() == (v == Variant::phredgan_d));
        }
    }
}

TEST_CASE("generation is a function of the seed", "[inference][determinism]") {
    auto m = trained(Variant::phredgan_d);
    auto texts = [&](std::uint64_t seed) {
        std::vector<std::pair<std::vector<int>, double>> out;
        for (const auto& c : generate(*m, request(8, 3.0, seed))) out.emplace_back(c.tokens, c.rank_score);
        return out;
    };
    CHECK(texts(4) == texts(4));
}

TEST_CASE("phred returns the single noiseless greedy decode", "[inference]") {
    auto m = trained(Variant::phred);
    const auto a = generate(*m, request(8, 5.0, 1));
    const auto b = generate(*m, request(8, 9.0, 2));
    REQUIRE(a.size() == 1);
    CHECK(a.front().tokens == b.front().tokens);
    CHECK(a.front().rank_score == 0);
}

TEST_CASE("invalid target attribute is rejected", "[inference]") {
    auto m = trained(Variant::phredgan_a);
    auto r = request(2, 1.0);
    r.target_attribute = 5;
    CHECK_THROWS(generate(*m, r));
    r.target_attribute = 0;
    r.context.clear();
    CHECK_THROWS(generate(*m, r));
}

TEST_CASE("hredgan output ignores the target attribute", "[inference]") {
    auto m = trained(Variant::hredgan);
    auto r0 = request(4, 2.0);
    auto r1 = r0;
    r1.target_attribute = 0;
    const auto a = generate(*m, r0), b = generate(*m, r1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].tokens == b[i].tokens);
        CHECK(a[i].rank_score == b[i].rank_score);
    }
}

TEST_CASE("context is capped to the most recent max_turns turns", "[inference]") {
    auto m = trained(Variant::phredgan_a);
    auto r = request(3, 1.0);
    r.context = {{0, {4}}, {1, {5}}, {0, {6, 7}}, {1, {4, 4}}};
    auto tail = r;
    tail.context.erase(tail.context.begin());
    REQUIRE(m->config().max_turns == 3);
    const auto a = generate(*m, r), b = generate(*m, tail);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].tokens == b[i].tokens);
}

TEST_CASE("alpha selection takes the argmin, ties to the smaller alpha", "[inference][alpha]") {
    CHECK(select_alpha({{1, 0.9}, {2, 0.4}, {3, 0.7}}) == 1);
    const std::vector<std::pair<double, double>> tie{{1, 0.9}, {2, 0.4}, {5, 0.4}};
    CHECK(tie[select_alpha(tie)].first == 2);
    CHECK_THROWS(select_alpha({}));
    CHECK(default_alpha_grid().size() == 30);
    CHECK(default_alpha_grid().front() == 1);
    CHECK(default_alpha_grid().back() == 30);
}

TEST_CASE("alpha search returns a grid member and reproducible scores", "[inference][alpha]") {
    auto m = trained(Variant::phredgan_d);
    const std::vector<double> grid{1, 2, 3, 4};
    const auto a = alpha_search(*m, toy_conversations(), grid, 7);
    const auto b = alpha_search(*m, toy_conversations(), grid, 7);
    REQUIRE(a.table.size() == 4);
    CHECK(std::find(grid.begin(), grid.end(), a.best_alpha) != grid.end());
    CHECK(a.table == b.table);
    CHECK(a.best_alpha == b.best_alpha);
    CHECK(alpha_score(*m, toy_conversations(), a.best_alpha, 7) == a.best_score);
    CHECK_THROWS(alpha_search(*m, toy_conversations(), {}, 7));
    CHECK_THROWS(alpha_search(*m, {}, grid, 7));
}
