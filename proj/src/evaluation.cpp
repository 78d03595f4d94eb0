// SPDX-License-Identifier: Apache-2.0

#include "phred/evaluation.hpp"

#include <cmath>
#include <fstream>

namespace phred {

using nlohmann::json;
using nlohmann::ordered_json;

PerplexityResult teacher_forced_perplexity(const PhredModel& model, const std::vector<Conversation>& conversations,
                                           const NoiseSpec& noise, std::uint64_t seed) {
    NoGradGuard no_grad;
    const Config& cfg = model.config();
    PerplexityResult out;
    CounterRng rng(seed, 0x9e7);
    for (const Batch& batch : make_batches(conversations, {cfg.batch_size, cfg.max_turns, cfg.max_len}, seed, 0)) {
        ContextState state = ContextState::initial(batch.size(), model.shape().layers, model.shape().hidden_size);
        for (int i = 0; i + 1 < batch.turn_count(); ++i) {
            state = model.generator().encode_turn(state, batch.turns[static_cast<std::size_t>(i)].tokens,
                                                  batch.source_attributes(i));
            const TokenMatrix& gold = batch.turns[static_cast<std::size_t>(i) + 1].tokens;
            const auto z = sample_noise(noise, batch.size(), gold.cols, rng);
            const auto logits = model.generator().teacher_forced_logits(state, gold, batch.target_attributes(i), z);
            for (int t = 0; t < gold.cols; ++t) {
                const Tensor ce = cross_entropy(logits[static_cast<std::size_t>(t)], gold.column(t));
                for (int r = 0; r < gold.rows; ++r) {
                    if (!gold.mask(r, t)) continue;
                    out.total_nll += ce.at(r, 0);
                    out.tokens += 1;
                }
            }
        }
    }
    out.perplexity = perplexity_from_nll(out.total_nll, out.tokens);
    return out;
}

double attribute_accuracy(const PhredModel& model, const std::vector<Conversation>& conversations) {
    NoGradGuard no_grad;
    if (!model.att()) throw std::invalid_argument("attribute accuracy needs the attribute discriminator");
    const Config& cfg = model.config();
    double correct = 0, total = 0;
    for (const Batch& batch : make_batches(conversations, {cfg.batch_size, cfg.max_turns, cfg.max_len}, 0, 0)) {
        ContextState state = ContextState::initial(batch.size(), model.shape().layers, model.shape().hidden_size);
        for (int i = 0; i + 1 < batch.turn_count(); ++i) {
            state = model.generator().encode_turn(state, batch.turns[static_cast<std::size_t>(i)].tokens,
                                                  batch.source_attributes(i));
            const Tensor probs = model.att()->probabilities(model.shared(), state.hidden,
                                                            batch.turns[static_cast<std::size_t>(i) + 1].tokens);
            const auto& target = batch.target_attributes(i);
            for (int r = 0; r < probs.rows(); ++r) {
                int best = 0;
                for (int k = 1; k < probs.cols(); ++k) {
                    if (probs.at(r, k) > probs.at(r, best)) best = k;
                }
                correct += best == target[static_cast<std::size_t>(r)] ? 1 : 0;
                total += 1;
            }
        }
    }
    if (total == 0) throw std::invalid_argument("attribute accuracy: no responses");
    return correct / total;
}

ordered_json EvalReport::to_json() const {
    ordered_json j;
    j["perplexity"] = perplexity ? json(*perplexity) : json(nullptr);
    j["bleu2"] = bleu2;
    j["bleu4"] = bleu4;
    j["rouge2_f1"] = rouge2_f1;
    j["distinct1"] = distinct1;
    j["distinct2"] = distinct2;
    j["nasl"] = nasl;
    j["samples"] = samples;
    return j;
}

EvalReport evaluate_text(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
    if (hypotheses.empty()) throw std::invalid_argument("evaluation: no samples");
    EvalReport r;
    r.samples = hypotheses.size();
    r.bleu2 = bleu(hypotheses, references, 2);
    r.bleu4 = bleu(hypotheses, references, 4);
    r.rouge2_f1 = rouge2_f1(hypotheses, references);
    r.distinct1 = distinct_n(hypotheses, 1);
    r.distinct2 = distinct_n(hypotheses, 2);
    r.nasl = nasl(hypotheses, references);
    return r;
}

std::vector<HypothesisRecord> read_hypothesis_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open hypothesis file " + path.string());
    std::vector<HypothesisRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            out.push_back({j.value("context_id", std::string()), j.at("hypothesis").get<std::string>(),
                           j.at("reference").get<std::string>()});
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_hypothesis_file(const std::filesystem::path& path, const std::vector<HypothesisRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) {
        ordered_json j;
        j["context_id"] = r.context_id;
        j["hypothesis"] = r.hypothesis;
        j["reference"] = r.reference;
        out << j.dump() << '\n';
    }
}

std::vector<HypothesisRecord> generate_responses(const PhredModel& model, const std::vector<Conversation>& conversations,
                                                 int num_candidates, double alpha, std::uint64_t seed) {
    std::vector<HypothesisRecord> out;
    std::uint64_t request = 0;
    for (const auto& conv : conversations) {
        for (std::size_t i = 1; i < conv.turns.size(); ++i) {
            GenerationRequest req;
            req.context.assign(conv.turns.begin(), conv.turns.begin() + static_cast<std::ptrdiff_t>(i));
            req.target_attribute = conv.turns[i].attribute;
            req.num_candidates = num_candidates;
            req.max_len = model.config().max_len;
            req.alpha = alpha;
            req.seed = mix64(seed ^ mix64(++request));
            const auto candidates = generate(model, req);
            out.push_back({conv.id + "#" + std::to_string(i), candidates.front().text,
                           detokenize(model.vocabulary().decode(conv.turns[i].tokens))});
        }
    }
    return out;
}

}  // namespace phred
