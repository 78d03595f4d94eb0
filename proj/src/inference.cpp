// SPDX-License-Identifier: Apache-2.0

#include "phred/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace phred {

double rank_score(Variant variant, double adv_score, std::optional<double> att_log_confidence, std::size_t length) {
    if (variant != Variant::phredgan_d || !att_log_confidence) return adv_score;
    return 0.5 * (adv_score + *att_log_confidence / static_cast<double>(std::max<std::size_t>(length, 1)));
}

ContextState encode_context(const PhredModel& model, const std::vector<Turn>& context) {
    if (context.empty()) throw std::invalid_argument("generate: empty context");
    const int cap = model.config().max_turns;
    const std::size_t first = context.size() > static_cast<std::size_t>(cap) ? context.size() - static_cast<std::size_t>(cap) : 0;
    ContextState state = ContextState::initial(1, model.shape().layers, model.shape().hidden_size);
    for (std::size_t i = first; i < context.size(); ++i) {
        const Turn& turn = context[i];
        if (turn.tokens.empty()) throw std::invalid_argument("generate: empty context turn");
        const TokenMatrix m = TokenMatrix::from_rows({prepare_turn(turn.tokens, model.config().max_len)});
        const std::vector<int> attr{turn.attribute};
        state = model.generator().encode_turn(state, m, attr);
    }
    return state;
}

std::vector<std::vector<int>> greedy_decode(const PhredModel& model, const ContextState& state,
                                            const std::vector<int>& target_attributes,
                                            const std::vector<Tensor>& noise, int max_len) {
    if (max_len < 1) throw std::invalid_argument("generate: max_len must be at least 1");
    const int rows = state.rows();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(rows));
    std::vector<bool> done(static_cast<std::size_t>(rows), false);
    std::vector<int> previous(static_cast<std::size_t>(rows), Vocabulary::bos);
    std::vector<Tensor> hidden = state.hidden;
    int active = rows;
    for (int j = 0; j < max_len && active > 0; ++j) {
        const Tensor& z = noise[std::min(static_cast<std::size_t>(j), noise.size() - 1)];
        auto step = model.generator().decode_step(state, previous, target_attributes, z, hidden);
        hidden = std::move(step.hidden);
        const int V = step.logits.cols();
        auto v = step.logits.values();
        for (int r = 0; r < rows; ++r) {
            const real* row = v.data() + static_cast<std::size_t>(r) * V;
            const int best = static_cast<int>(std::max_element(row, row + V) - row);
            previous[static_cast<std::size_t>(r)] = best;
            if (done[static_cast<std::size_t>(r)]) continue;
            out[static_cast<std::size_t>(r)].push_back(best);
            if (best == Vocabulary::eos) {
                done[static_cast<std::size_t>(r)] = true;
                --active;
            }
        }
    }
    return out;
}

namespace {

std::string candidate_text(const PhredModel& model, const std::vector<int>& tokens) {
    return detokenize(model.vocabulary().decode(tokens));
}

}  // namespace

std::vector<GenerationCandidate> generate(const PhredModel& model, const GenerationRequest& request) {
    NoGradGuard no_grad;
    if (request.num_candidates < 1) throw std::invalid_argument("generate: need at least one candidate");
    if (model.shape().attributes &&
        (request.target_attribute < 0 || request.target_attribute >= model.attributes().size())) {
        throw std::invalid_argument("generate: invalid target attribute " + std::to_string(request.target_attribute));
    }
    const ContextState single = encode_context(model, request.context);
    const bool noiseless = model.variant() == Variant::phred;
    const int L = noiseless ? 1 : request.num_candidates;
    const ContextState state = single.repeat(L);
    const std::vector<int> attrs(static_cast<std::size_t>(L), request.target_attribute);
    CounterRng rng(request.seed, 0x6e4e);
    const auto noise = sample_noise(model.noise(request.alpha), L, request.max_len, rng);
    const auto sequences = greedy_decode(model, state, attrs, noise, request.max_len);

    std::vector<GenerationCandidate> out(static_cast<std::size_t>(L));
    for (int r = 0; r < L; ++r) {
        out[static_cast<std::size_t>(r)].tokens = sequences[static_cast<std::size_t>(r)];
        out[static_cast<std::size_t>(r)].text = candidate_text(model, sequences[static_cast<std::size_t>(r)]);
    }
    if (noiseless || !model.adv()) return out;

    const TokenMatrix m = TokenMatrix::from_rows(sequences);
    const AdvDiscriminator& adv = *model.adv();
    const WordProbs wp = adv.word_probs(model.shared(), state.hidden, m,
                                        adv.conditioned() ? std::span<const int>(attrs) : std::span<const int>());
    const auto means = wp.mean_log_per_row();
    Tensor att_probs;
    if (model.att()) att_probs = model.att()->probabilities(model.shared(), state.hidden, m);
    auto p = wp.probs.values();
    for (int r = 0; r < L; ++r) {
        auto& c = out[static_cast<std::size_t>(r)];
        for (std::size_t t = 0; t < c.tokens.size(); ++t) c.word_probs.push_back(p[t * static_cast<std::size_t>(L) + static_cast<std::size_t>(r)]);
        c.adv_score = means[static_cast<std::size_t>(r)];
        if (att_probs.defined()) {
            const double pc = att_probs.at(r, request.target_attribute);
            c.att_log_confidence = std::log(std::clamp(pc, 1e-7, 1.0 - 1e-7));
        }
        c.rank_score = rank_score(model.variant(), c.adv_score, c.att_log_confidence, c.tokens.size());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const GenerationCandidate& a, const GenerationCandidate& b) { return a.rank_score > b.rank_score; });
    return out;
}

// ---- alpha search -------------------------------------------------------------

double alpha_score(const PhredModel& model, const std::vector<Conversation>& validation, double alpha,
                   std::uint64_t seed) {
    NoGradGuard no_grad;
    if (!model.adv()) throw std::invalid_argument("alpha search needs an adversarial discriminator");
    if (validation.empty()) throw std::invalid_argument("alpha search: empty validation corpus");
    const Config& cfg = model.config();
    const AdvDiscriminator& adv = *model.adv();
    const auto batches = make_batches(validation, {cfg.batch_size, cfg.max_turns, cfg.max_len}, seed, 0);
    CounterRng rng(seed, 0xa1fa);
    double total = 0, words = 0;
    for (const Batch& batch : batches) {
        ContextState state = ContextState::initial(batch.size(), model.shape().layers, model.shape().hidden_size);
        for (int i = 0; i + 1 < batch.turn_count(); ++i) {
            state = model.generator().encode_turn(state, batch.turns[static_cast<std::size_t>(i)].tokens,
                                                  batch.source_attributes(i));
            const auto& attrs = batch.target_attributes(i);
            const auto noise = sample_noise(model.noise(alpha), batch.size(), cfg.max_len, rng);
            const auto generated = greedy_decode(model, state, attrs, noise, cfg.max_len);
            const TokenMatrix m = TokenMatrix::from_rows(generated);
            const WordProbs wp = adv.word_probs(model.shared(), state.hidden, m,
                                                adv.conditioned() ? std::span<const int>(attrs) : std::span<const int>());
            auto p = wp.probs.values();
            auto mask = wp.mask.values();
            for (std::size_t k = 0; k < p.size(); ++k) {
                if (mask[k] == 0) continue;
                total -= std::log(std::clamp(static_cast<double>(p[k]), 1e-7, 1.0 - 1e-7));
                words += 1;
            }
        }
    }
    return total / words;
}

std::size_t select_alpha(const std::vector<std::pair<double, double>>& table) {
    if (table.empty()) throw std::invalid_argument("alpha search: empty grid");
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const bool better = table[i].second < table[best].second ||
                            (table[i].second == table[best].second && table[i].first < table[best].first);
        if (better) best = i;
    }
    return best;
}

AlphaSearchResult alpha_search(const PhredModel& model, const std::vector<Conversation>& validation,
                               const std::vector<double>& grid, std::uint64_t seed) {
    if (grid.empty()) throw std::invalid_argument("alpha search: empty grid");
    AlphaSearchResult result;
    for (double a : grid) result.table.emplace_back(a, alpha_score(model, validation, a, seed));
    const std::size_t best = select_alpha(result.table);
    result.best_alpha = result.table[best].first;
    result.best_score = result.table[best].second;
    return result;
}

std::vector<double> default_alpha_grid() {
    std::vector<double> grid(30);
    std::iota(grid.begin(), grid.end(), 1.0);
    return grid;
}

}  // namespace phred
