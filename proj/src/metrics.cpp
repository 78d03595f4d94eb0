// SPDX-License-Identifier: Apache-2.0

#include "phred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace phred {

namespace {

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts ngrams(const Sentence& s, int n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) {
        ++counts[Sentence(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
    }
    return counts;
}

long clipped_overlap(const NgramCounts& hyp, const NgramCounts& ref) {
    long m = 0;
    for (const auto& [g, c] : hyp) {
        auto it = ref.find(g);
        if (it != ref.end()) m += std::min(c, it->second);
    }
    return m;
}

long total(const NgramCounts& counts) {
    long t = 0;
    for (const auto& [g, c] : counts) t += c;
    return t;
}

void check_aligned(std::size_t h, std::size_t r, const char* what) {
    if (h != r) {
        throw std::invalid_argument(std::string(what) + ": " + std::to_string(h) + " hypotheses but " +
                                    std::to_string(r) + " references");
    }
}

}  // namespace

double bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references, int n) {
    check_aligned(hypotheses.size(), references.size(), "bleu");
    if (n < 1) throw std::invalid_argument("bleu: order must be at least 1");
    std::vector<double> matched(static_cast<std::size_t>(n), 0.0), possible(static_cast<std::size_t>(n), 0.0);
    double hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        hyp_len += static_cast<double>(hypotheses[i].size());
        ref_len += static_cast<double>(references[i].size());
        for (int k = 1; k <= n; ++k) {
            const auto h = ngrams(hypotheses[i], k);
            matched[static_cast<std::size_t>(k - 1)] += static_cast<double>(clipped_overlap(h, ngrams(references[i], k)));
            possible[static_cast<std::size_t>(k - 1)] += static_cast<double>(total(h));
        }
    }
    if (hyp_len == 0) return 0.0;
    double log_sum = 0;
    for (int k = 0; k < n; ++k) {
        const double p = std::max(matched[static_cast<std::size_t>(k)], 1e-9) / std::max(possible[static_cast<std::size_t>(k)], 1.0);
        log_sum += std::log(p);
    }
    const double bp = hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0;
    return bp * std::exp(log_sum / n);
}

double rouge2_f1(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
    check_aligned(hypotheses.size(), references.size(), "rouge2_f1");
    double matches = 0, hyp_total = 0, ref_total = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto h = ngrams(hypotheses[i], 2);
        const auto r = ngrams(references[i], 2);
        matches += static_cast<double>(clipped_overlap(h, r));
        hyp_total += static_cast<double>(total(h));
        ref_total += static_cast<double>(total(r));
    }
    if (hyp_total == 0 || ref_total == 0 || matches == 0) return 0.0;
    const double p = matches / hyp_total;
    const double r = matches / ref_total;
    return 2 * p * r / (p + r);
}

double distinct_n(const std::vector<Sentence>& hypotheses, int n) {
    if (n < 1) throw std::invalid_argument("distinct_n: order must be at least 1");
    std::set<Sentence> unique;
    double count = 0;
    for (const auto& h : hypotheses) {
        for (const auto& [g, c] : ngrams(h, n)) {
            unique.insert(g);
            count += static_cast<double>(c);
        }
    }
    return count == 0 ? 0.0 : static_cast<double>(unique.size()) / count;
}

double nasl(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
    check_aligned(hypotheses.size(), references.size(), "nasl");
    if (hypotheses.empty()) throw std::invalid_argument("nasl: no samples");
    double acc = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        if (references[i].empty()) throw std::invalid_argument("nasl: zero-length reference at sample " + std::to_string(i));
        acc += static_cast<double>(hypotheses[i].size()) / static_cast<double>(references[i].size());
    }
    return acc / static_cast<double>(hypotheses.size());
}

double perplexity_from_nll(double total_nll, double tokens) {
    if (tokens <= 0) throw std::invalid_argument("perplexity: no tokens");
    return std::exp(total_nll / tokens);
}

std::vector<HumanEvalScore> human_eval_aggregate(const std::vector<std::vector<std::vector<int>>>& ranks) {
    if (ranks.empty() || ranks.front().empty()) throw std::invalid_argument("human_eval: empty rank matrix");
    const std::size_t judges = ranks.front().size();
    const std::size_t models = ranks.front().front().size();
    if (models < 2) throw std::invalid_argument("human_eval: need at least two models");
    const double top = static_cast<double>(models - 1);
    for (std::size_t s = 0; s < ranks.size(); ++s) {
        if (ranks[s].size() != judges) throw std::invalid_argument("human_eval: ragged judge dimension");
        for (std::size_t j = 0; j < judges; ++j) {
            const auto& row = ranks[s][j];
            if (row.size() != models) throw std::invalid_argument("human_eval: ragged model dimension");
            std::vector<int> sorted = row;
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t k = 0; k < models; ++k) {
                if (sorted[k] != static_cast<int>(k)) {
                    throw std::invalid_argument("human_eval: sample " + std::to_string(s) + " judge " +
                                                std::to_string(j) + " is not a permutation (ties are not allowed)");
                }
            }
        }
    }
    const double S = static_cast<double>(ranks.size());
    const double J = static_cast<double>(judges);
    std::vector<HumanEvalScore> out(models);
    for (std::size_t m = 0; m < models; ++m) {
        double total = 0, var_sum = 0;
        for (const auto& sample : ranks) {
            double mean = 0;
            for (const auto& judge : sample) mean += judge[m] / top;
            mean /= J;
            double var = 0;
            for (const auto& judge : sample) var += (judge[m] / top - mean) * (judge[m] / top - mean);
            var_sum += var / J;
            total += mean;
        }
        out[m].mean = total / S;
        out[m].std_error = std::sqrt(var_sum / (S * S));
    }
    return out;
}

}  // namespace phred
