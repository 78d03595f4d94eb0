// SPDX-License-Identifier: Apache-2.0

#include "phred/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "phred/checkpoint.hpp"
#include "phred/logging.hpp"
#include "phred/losses.hpp"

namespace phred {

namespace fs = std::filesystem;

const char* to_string(GeneratorMode mode) {
    switch (mode) {
        case GeneratorMode::mle_only: return "mle_only";
        case GeneratorMode::full: return "full";
        case GeneratorMode::none: return "none";
    }
    return "?";
}

UpdateDecision decide_updates(Variant variant, double accuracy, double acc_d_threshold, double acc_g_threshold) {
    if (!has_adv_discriminator(variant)) return {false, GeneratorMode::mle_only};
    return {accuracy < acc_d_threshold, accuracy < acc_g_threshold ? GeneratorMode::mle_only : GeneratorMode::full};
}

namespace {

// Draws one token per row from softmax(logits) and cuts each response after
// its first EOS or its gold length.
std::vector<std::vector<int>> sample_responses(const std::vector<Tensor>& logits, const TokenMatrix& gold,
                                               CounterRng& rng) {
    const int rows = gold.rows;
    std::vector<std::vector<int>> out(static_cast<std::size_t>(rows));
    std::vector<bool> done(static_cast<std::size_t>(rows), false);
    std::vector<double> probs;
    for (int t = 0; t < gold.cols; ++t) {
        const Tensor& step = logits[static_cast<std::size_t>(t)];
        const int V = step.cols();
        auto v = step.values();
        for (int r = 0; r < rows; ++r) {
            const double u = rng.uniform();
            if (done[static_cast<std::size_t>(r)] || t >= gold.lengths[static_cast<std::size_t>(r)]) continue;
            const real* row = v.data() + static_cast<std::size_t>(r) * V;
            const double mx = *std::max_element(row, row + V);
            probs.assign(static_cast<std::size_t>(V), 0.0);
            double total = 0;
            for (int k = 0; k < V; ++k) total += probs[static_cast<std::size_t>(k)] = std::exp(row[k] - mx);
            double acc = 0;
            int pick = V - 1;
            for (int k = 0; k < V; ++k) {
                acc += probs[static_cast<std::size_t>(k)] / total;
                if (u < acc) {
                    pick = k;
                    break;
                }
            }
            out[static_cast<std::size_t>(r)].push_back(pick);
            if (pick == Vocabulary::eos) done[static_cast<std::size_t>(r)] = true;
        }
    }
    return out;
}

bool finite(const Tensor& t) { return !t.defined() || std::isfinite(static_cast<double>(t.item())); }
double value_or_zero(const Tensor& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; }

std::vector<std::vector<real>> collect_grads(const std::vector<Tensor>& params) {
    std::vector<std::vector<real>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        if (p.has_grad()) {
            grads.emplace_back(p.grad().begin(), p.grad().end());
        } else {
            grads.emplace_back(p.numel(), real(0));
        }
    }
    return grads;
}

std::vector<Tensor> params_in(const ParameterStore& store, std::initializer_list<ParamGroup> groups) {
    std::vector<Tensor> out;
    for (const auto& e : store.entries()) {
        if (std::find(groups.begin(), groups.end(), e.group) != groups.end()) out.push_back(e.tensor);
    }
    return out;
}

}  // namespace

BatchLosses compute_batch_losses(const PhredModel& model, const Batch& batch, const NoiseSpec& noise, CounterRng& rng) {
    if (batch.turn_count() < 2) throw std::invalid_argument("training batch needs at least two turns");
    const Generator& gen = model.generator();
    const SharedEncoder& shared = model.shared();
    const AdvDiscriminator* adv = model.adv();
    const AttDiscriminator* att = model.att();
    const int B = batch.size();
    const int L = model.shape().layers;

    std::vector<Tensor> logits_all, gold_masks;
    std::vector<int> gold_targets;
    std::vector<Tensor> d_probs, d_gt_masks, d_gen_masks;
    std::vector<Tensor> att_gt, att_gen;
    std::vector<int> att_targets;
    std::size_t acc_correct = 0, acc_total = 0;

    CounterRng noise_rng = rng.fork(1);
    CounterRng sample_rng = rng.fork(2);

    ContextState state = ContextState::initial(B, L, model.shape().hidden_size);
    for (int i = 0; i + 1 < batch.turn_count(); ++i) {
        state = gen.encode_turn(state, batch.turns[static_cast<std::size_t>(i)].tokens, batch.source_attributes(i));
        const TokenMatrix& gold = batch.turns[static_cast<std::size_t>(i) + 1].tokens;
        const auto& target_attrs = batch.target_attributes(i);
        const auto z = sample_noise(noise, B, gold.cols, noise_rng);
        auto logits = gen.teacher_forced_logits(state, gold, target_attrs, z);
        for (int t = 0; t < gold.cols; ++t) {
            const auto col = gold.column(t);
            gold_targets.insert(gold_targets.end(), col.begin(), col.end());
            gold_masks.push_back(gold.mask_column(t));
        }
        if (!adv) {
            logits_all.insert(logits_all.end(), logits.begin(), logits.end());
            continue;
        }
        // Ground truth rows [0, B), generated rows [B, 2B), scored in one pass.
        std::vector<std::vector<int>> rows;
        for (int r = 0; r < B; ++r) rows.push_back(gold.row(r));
        auto generated = sample_responses(logits, gold, sample_rng);
        rows.insert(rows.end(), generated.begin(), generated.end());
        logits_all.insert(logits_all.end(), logits.begin(), logits.end());
        const TokenMatrix both = TokenMatrix::from_rows(rows);
        std::vector<Tensor> context;
        for (const auto& h : state.hidden) context.push_back(repeat_rows(h, 2));
        std::vector<int> attrs2;
        if (adv->conditioned()) {
            attrs2 = target_attrs;
            attrs2.insert(attrs2.end(), target_attrs.begin(), target_attrs.end());
        }
        const WordProbs wp = adv->word_probs(shared, context, both, attrs2);
        d_probs.push_back(wp.probs);
        d_gt_masks.push_back(wp.mask_for_rows(0, B));
        d_gen_masks.push_back(wp.mask_for_rows(B, 2 * B));
        {
            auto p = wp.probs.values();
            auto m = wp.mask.values();
            for (int t = 0; t < wp.steps; ++t) {
                for (int r = 0; r < wp.rows; ++r) {
                    const auto k = static_cast<std::size_t>(t * wp.rows + r);
                    if (m[k] == 0) continue;
                    ++acc_total;
                    acc_correct += (r < B ? p[k] > 0.5 : p[k] < 0.5) ? 1 : 0;
                }
            }
        }
        if (att) {
            const Tensor dist = att->probabilities(shared, context, both);
            att_gt.push_back(slice_rows(dist, 0, B));
            att_gen.push_back(slice_rows(dist, B, 2 * B));
            att_targets.insert(att_targets.end(), target_attrs.begin(), target_attrs.end());
        }
    }

    BatchLosses out;
    const Tensor mask = concat_rows(gold_masks);
    out.mle = mle_loss(concat_rows(logits_all), gold_targets, mask);
    for (real m : mask.values()) out.response_tokens += m > 0 ? 1 : 0;
    if (adv) {
        const Tensor probs = concat_rows(d_probs);
        const auto l = adv_loss(probs, concat_rows(d_gt_masks), probs, concat_rows(d_gen_masks));
        out.d_adv = l.discriminator;
        out.g_adv = l.generator;
        out.accuracy = static_cast<double>(acc_correct) / static_cast<double>(acc_total);
    }
    if (att) {
        const auto l = att_loss(concat_rows(att_gt), concat_rows(att_gen), att_targets);
        out.d_att = l.discriminator;
        out.g_att = l.generator;
    }
    return out;
}

Tensor generator_objective(const BatchLosses& losses, const Config& config, GeneratorMode mode) {
    Tensor total = scale(losses.mle, static_cast<real>(config.lambda_m));
    if (mode != GeneratorMode::full) return total;
    if (losses.g_adv.defined() && config.lambda_g_adv != 0) {
        total = add(total, scale(losses.g_adv, static_cast<real>(config.lambda_g_adv)));
    }
    if (losses.g_att.defined() && config.lambda_g_att != 0) {
        total = add(total, scale(losses.g_att, static_cast<real>(config.lambda_g_att)));
    }
    return total;
}

Tensor discriminator_objective(const BatchLosses& losses) {
    if (!losses.d_adv.defined()) throw std::logic_error("no discriminator loss for this variant");
    return losses.d_att.defined() ? add(losses.d_adv, losses.d_att) : losses.d_adv;
}

nlohmann::ordered_json StepRecord::to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["step"] = step;
    j["mle"] = mle;
    j["d_adv"] = d_adv;
    j["g_adv"] = g_adv;
    j["d_att"] = d_att;
    j["g_att"] = g_att;
    j["accuracy"] = accuracy;
    j["d_updated"] = d_updated;
    j["g_mode"] = to_string(g_mode);
    j["d_grad_norm"] = d_grad_norm;
    j["g_grad_norm"] = g_grad_norm;
    return j;
}

TrainReport train(PhredModel& model, const std::vector<Conversation>& conversations, const TrainOptions& options) {
    const Config& cfg = model.config();
    const auto start = std::chrono::steady_clock::now();
    TrainReport report;
    ParameterStore& store = model.parameters();
    const auto d_params = params_in(store, {ParamGroup::adv_discriminator, ParamGroup::att_discriminator, ParamGroup::shared});
    const auto g_params = params_in(store, {ParamGroup::generator, ParamGroup::shared});
    const NoiseSpec noise = model.training_noise();
    const BatchOptions batching{cfg.batch_size, cfg.max_turns, cfg.max_len};

    std::ofstream log_file;
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        log_file.open(options.out_dir / "train_log.jsonl", std::ios::binary);
    }
    auto checkpoint = [&](const std::string& name, long step) {
        if (options.out_dir.empty()) return;
        const fs::path dir = options.out_dir / name;
        save_checkpoint(model, dir, step);
        report.checkpoints.push_back(dir);
    };

    long step = 0;
    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        const auto batches = make_batches(conversations, batching, cfg.seed, static_cast<std::uint64_t>(epoch));
        if (batches.empty()) throw std::invalid_argument("training corpus yields no batches");
        for (const Batch& batch : batches) {
            if (options.max_steps > 0 && step >= options.max_steps) {
                stop = true;
                break;
            }
            store.zero_grad();
            CounterRng rng = CounterRng(cfg.seed, 0x7a17).fork(static_cast<std::uint64_t>(step));
            const BatchLosses losses = compute_batch_losses(model, batch, noise, rng);

            StepRecord rec;
            rec.epoch = epoch;
            rec.step = step;
            rec.mle = value_or_zero(losses.mle);
            rec.d_adv = value_or_zero(losses.d_adv);
            rec.g_adv = value_or_zero(losses.g_adv);
            rec.d_att = value_or_zero(losses.d_att);
            rec.g_att = value_or_zero(losses.g_att);
            rec.accuracy = losses.accuracy;

            if (!finite(losses.mle) || !finite(losses.d_adv) || !finite(losses.g_adv) || !finite(losses.d_att) ||
                !finite(losses.g_att)) {
                report.aborted = true;
                report.abort_reason = "non-finite loss at step " + std::to_string(step);
                logging::error("diverged: ", report.abort_reason);
                report.steps.push_back(rec);
                checkpoint("diverged", step);
                stop = true;
                break;
            }

            double accuracy = losses.accuracy;
            if (options.accuracy_override) {
                if (auto forced = options.accuracy_override(step)) accuracy = *forced;
            }
            const UpdateDecision decision =
                decide_updates(cfg.variant, accuracy, cfg.acc_d_threshold, cfg.acc_g_threshold);
            rec.d_updated = decision.update_discriminator;
            rec.g_mode = decision.generator;

            // Both gradients come from the same forward pass, so they are taken
            // before any parameter moves.
            std::vector<std::vector<real>> d_grads;
            if (decision.update_discriminator) {
                backward(discriminator_objective(losses));
                d_grads = collect_grads(d_params);
                store.zero_grad();
            }
            backward(generator_objective(losses, cfg, decision.generator));
            const auto g_grads = collect_grads(g_params);

            const auto lr = static_cast<real>(cfg.learning_rate);
            const auto clip = static_cast<real>(cfg.clip_norm);
            if (decision.update_discriminator) rec.d_grad_norm = sgd_step(d_params, d_grads, lr, clip);
            rec.g_grad_norm = sgd_step(g_params, g_grads, lr, clip);

            report.steps.push_back(rec);
            if (log_file) log_file << rec.to_json().dump() << '\n';
            if (options.on_step) options.on_step(rec);
            if (cfg.log_every > 0 && step % cfg.log_every == 0) {
                logging::info("epoch ", epoch, " step ", step, " mle ", rec.mle, " acc ", rec.accuracy, " d ",
                              rec.d_updated ? "on" : "off", " g ", to_string(rec.g_mode));
            }
            ++step;
            if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
                checkpoint("checkpoint-" + std::to_string(step), step);
            }
        }
        if (stop) break;
        report.epochs_completed = epoch + 1;
        if (options.on_epoch && !options.on_epoch(epoch)) break;
    }
    if (!report.aborted) checkpoint("snapshot", step);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace phred
