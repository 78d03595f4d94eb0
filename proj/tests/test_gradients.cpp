// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of the recurrent blocks and of the full training
// objectives on a toy model. Built against the 64-bit library.

#include <catch_amalgamated.hpp>

#include "gradcheck.hpp"
#include "phred/losses.hpp"
#include "phred/training.hpp"
#include "toy_model.hpp"

using namespace phred;
using namespace phred::testing;

namespace {

constexpr double kTolerance = 1e-3;
constexpr double kEps = 1e-5;

Tensor random_matrix(int rows, int cols, CounterRng& rng, bool requires_grad = false) {
    std::vector<real> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = static_cast<real>(2 * rng.uniform() - 1);
    return Tensor::from({rows, cols}, std::move(v), requires_grad);
}

Tensor readout(const std::vector<Tensor>& outs, CounterRng& rng) {
    Tensor total;
    for (const auto& o : outs) {
        Tensor w = random_matrix(o.rows(), o.cols(), rng);
        Tensor s = sum(mul(o, w));
        total = total.defined() ? add(total, s) : s;
    }
    return total;
}

std::vector<Tensor> all_params(const ParameterStore& store) {
    std::vector<Tensor> out;
    for (const auto& e : store.entries()) out.push_back(e.tensor);
    return out;
}

void require_close(const GradCheckResult& r) {
    INFO("worst: " << r.worst << " (" << r.checked << " components)");
    CHECK(r.checked > 0);
    CHECK(r.max_relative_error < kTolerance);
}

}  // namespace

TEST_CASE("stacked GRU with padding matches finite differences", "[gradcheck]") {
    ParameterStore store;
    CounterRng rng(3);
    const auto gru = StackedGru::create(store, "g", 3, 2, 2, ParamGroup::shared, rng);
    const Tensor x0 = random_matrix(2, 3, rng), x1 = random_matrix(2, 3, rng);
    const Tensor mask1 = Tensor::from({2, 1}, {1, 0});
    auto loss = [&] {
        CounterRng r(9);
        std::vector<Tensor> h{Tensor::zeros({2, 2}), Tensor::zeros({2, 2})};
        h = gru.step(x0, h);
        h = gru.step(x1, h, mask1);
        return readout(h, r);
    };
    require_close(finite_difference_check(all_params(store), loss, kEps));
}

TEST_CASE("bidirectional GRU with initial state matches finite differences", "[gradcheck]") {
    ParameterStore store;
    CounterRng rng(4);
    const auto bi = BiGru::create(store, "b", 2, 2, 2, ParamGroup::shared, rng);
    std::vector<Tensor> inputs{random_matrix(2, 2, rng), random_matrix(2, 2, rng), random_matrix(2, 2, rng)};
    std::vector<Tensor> masks{Tensor::from({2, 1}, {1, 1}), Tensor::from({2, 1}, {1, 1}), Tensor::from({2, 1}, {1, 0})};
    const Tensor h0 = random_matrix(2, 2, rng, true), h1 = random_matrix(2, 2, rng, true);
    auto params = all_params(store);
    params.push_back(h0);
    params.push_back(h1);
    auto loss = [&] {
        CounterRng r(10);
        const auto out = bi.run(inputs, masks, {h0, h1});
        std::vector<Tensor> all = out.top;
        all.insert(all.end(), out.final_forward.begin(), out.final_forward.end());
        all.insert(all.end(), out.final_backward.begin(), out.final_backward.end());
        return readout(all, r);
    };
    require_close(finite_difference_check(params, loss, kEps));
}

TEST_CASE("additive attention with a padding bias matches finite differences", "[gradcheck]") {
    ParameterStore store;
    CounterRng rng(5);
    const auto att = AttentionParams::create(store, "a", 2, 3, 2, ParamGroup::generator, rng);
    const Tensor q = random_matrix(2, 2, rng, true);
    std::vector<Tensor> keys{random_matrix(2, 3, rng, true), random_matrix(2, 3, rng, true), random_matrix(2, 3, rng, true)};
    const Tensor bias = Tensor::from({2, 3}, {0, 0, 0, 0, 0, -1e9});
    auto params = all_params(store);
    params.push_back(q);
    params.insert(params.end(), keys.begin(), keys.end());
    auto loss = [&] {
        CounterRng r(11);
        const auto res = additive_attention(att, q, keys, keys, bias);
        return readout({res.context, res.weights}, r);
    };
    require_close(finite_difference_check(params, loss, kEps));
}

TEST_CASE("the toy model stays within the size budget") {
    for (Variant v : {Variant::phred, Variant::hredgan, Variant::phredgan_a, Variant::phredgan_d}) {
        CHECK(toy_model(v)->parameters().parameter_count() <= 500);
    }
}

TEST_CASE("full generator and discriminator objectives match finite differences", "[gradcheck]") {
    const Variant variant = GENERATE(Variant::phred, Variant::hredgan, Variant::phredgan_a, Variant::phredgan_d);
    INFO("variant " << to_string(variant));
    auto model = toy_model(variant);
    const Batch batch = toy_batch();
    const auto params = all_params(model->parameters());
    auto losses = [&] {
        CounterRng rng(77);
        return compute_batch_losses(*model, batch, model->training_noise(), rng);
    };
    SECTION("generator, full update") {
        require_close(finite_difference_check(
            params, [&] { return generator_objective(losses(), model->config(), GeneratorMode::full); }, kEps));
    }
    if (has_adv_discriminator(variant)) {
        SECTION("discriminator") {
            require_close(finite_difference_check(params, [&] { return discriminator_objective(losses()); }, kEps));
        }
    }
}

TEST_CASE("the full generator gradient is the lambda-weighted sum of its terms", "[gradcheck]") {
    auto model = toy_model(Variant::phredgan_d);
    Config cfg = model->config();
    cfg.lambda_m = 0.7;
    cfg.lambda_g_adv = 1.3;
    cfg.lambda_g_att = 0.4;
    const Batch batch = toy_batch();
    auto& store = model->parameters();
    auto losses = [&] {
        CounterRng rng(78);
        return compute_batch_losses(*model, batch, model->training_noise(), rng);
    };
    auto grads_of = [&](auto pick) {
        store.zero_grad();
        backward(pick(losses()));
        std::vector<double> g;
        for (const auto& e : store.entries()) {
            if (e.tensor.has_grad()) {
                g.insert(g.end(), e.tensor.grad().begin(), e.tensor.grad().end());
            } else {
                g.insert(g.end(), e.tensor.numel(), 0.0);
            }
        }
        return g;
    };
    const auto total = grads_of([&](const BatchLosses& l) { return generator_objective(l, cfg, GeneratorMode::full); });
    const auto mle = grads_of([](const BatchLosses& l) { return l.mle; });
    const auto adv = grads_of([](const BatchLosses& l) { return l.g_adv; });
    const auto att = grads_of([](const BatchLosses& l) { return l.g_att; });
    double worst = 0;
    for (std::size_t i = 0; i < total.size(); ++i) {
        const double expected = cfg.lambda_m * mle[i] + cfg.lambda_g_adv * adv[i] + cfg.lambda_g_att * att[i];
        worst = std::max(worst, relative_error(total[i], expected));
    }
    CHECK(worst < 1e-9);

    // And the weighted total itself agrees with finite differences.
    std::vector<Tensor> params;
    for (const auto& e : store.entries()) params.push_back(e.tensor);
    require_close(finite_difference_check(
        params, [&] { return generator_objective(losses(), cfg, GeneratorMode::full); }, kEps));
}
