// SPDX-License-Identifier: Apache-2.0

#include "phred/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "phred/logging.hpp"
#include "phred/rng.hpp"

namespace phred {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---- files --------------------------------------------------------------

std::vector<RawConversation> read_dialogue_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dialogue file " + path.string());
    std::vector<RawConversation> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            RawConversation conv;
            conv.id = j.at("id").get<std::string>();
            for (const auto& t : j.at("turns")) {
                RawTurn turn;
                if (t.contains("speaker") && !t.at("speaker").is_null()) turn.speaker = t.at("speaker").get<std::string>();
                turn.text = t.at("text").get<std::string>();
                conv.turns.push_back(std::move(turn));
            }
            out.push_back(std::move(conv));
        } catch (const json::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed conversation: " + e.what());
        }
    }
    return out;
}

void write_dialogue_file(const fs::path& path, const std::vector<RawConversation>& conversations) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& conv : conversations) {
        ordered_json j;
        j["id"] = conv.id;
        j["turns"] = ordered_json::array();
        for (const auto& t : conv.turns) j["turns"].push_back({{"speaker", t.speaker}, {"text", t.text}});
        out << j.dump() << '\n';
    }
}

std::map<std::string, std::vector<std::string>> read_attribute_map(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open attribute map " + path.string());
    std::map<std::string, std::vector<std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line);
        out[j.at("id").get<std::string>()] = j.at("speakers").get<std::vector<std::string>>();
    }
    return out;
}

// ---- labelling and indexing ----------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_multi_token(const std::string& label) { return label.find_first_of(" \t\r\n") != std::string::npos; }

}  // namespace

std::vector<LabeledConversation> label_conversations(const std::vector<RawConversation>& raw, AttributeScheme scheme,
                                                     const std::map<std::string, std::vector<std::string>>& overrides,
                                                     IngestStats& stats) {
    std::vector<LabeledConversation> out;
    for (const auto& conv : raw) {
        ++stats.conversations_read;
        auto reject = [&](const std::string& why) {
            stats.rejected_ids.push_back(conv.id);
            logging::info("rejecting conversation ", conv.id, ": ", why);
        };
        std::vector<std::string> labels;
        if (scheme == AttributeScheme::alternating) {
            for (std::size_t i = 0; i < conv.turns.size(); ++i) labels.emplace_back(i % 2 == 0 ? "questioner" : "helper");
        } else if (auto it = overrides.find(conv.id); it != overrides.end()) {
            if (it->second.size() != conv.turns.size()) {
                reject("attribute record has " + std::to_string(it->second.size()) + " entries for " +
                       std::to_string(conv.turns.size()) + " turns");
                continue;
            }
            labels = it->second;
        } else {
            for (const auto& t : conv.turns) labels.push_back(t.speaker);
        }
        LabeledConversation lc{conv.id, {}};
        bool bad_label = false;
        for (std::size_t i = 0; i < conv.turns.size(); ++i) {
            const std::string label = trim(labels[i]);
            if (label.empty() || is_multi_token(label)) {
                bad_label = true;
                break;
            }
            auto tokens = tokenize(conv.turns[i].text);
            if (tokens.empty()) {
                ++stats.turns_dropped;
                continue;
            }
            lc.turns.emplace_back(label, std::move(tokens));
        }
        if (bad_label) {
            reject("attribute labels must be a single non-empty token");
            continue;
        }
        if (lc.turns.size() < 2) {
            reject("fewer than two non-empty turns");
            continue;
        }
        out.push_back(std::move(lc));
    }
    return out;
}

std::vector<Conversation> index_conversations(const std::vector<LabeledConversation>& labeled,
                                              const Vocabulary& vocabulary, const AttributeVocabulary& attributes,
                                              IngestStats& stats) {
    std::vector<Conversation> out;
    out.reserve(labeled.size());
    for (const auto& lc : labeled) {
        Conversation conv{lc.id, {}};
        for (const auto& [label, tokens] : lc.turns) {
            Turn turn{attributes.index(label), vocabulary.encode(tokens)};
            stats.tokens += turn.tokens.size();
            stats.oov_tokens += static_cast<std::size_t>(std::count(turn.tokens.begin(), turn.tokens.end(), Vocabulary::unk));
            conv.turns.push_back(std::move(turn));
        }
        out.push_back(std::move(conv));
    }
    stats.conversations_kept += out.size();
    return out;
}

Corpus ingest(const fs::path& path, const IngestOptions& options) {
    const bool is_dir = fs::is_directory(path);
    const fs::path dir = is_dir ? path : path.parent_path();
    const fs::path train_path = is_dir ? dir / "train.jsonl" : path;
    if (!fs::exists(train_path)) throw std::runtime_error("missing training split " + train_path.string());

    Corpus corpus;
    std::optional<AttributeVocabulary> attribute_file;
    if (is_dir && fs::exists(dir / "attributes.txt")) attribute_file = AttributeVocabulary::load(dir / "attributes.txt");

    AttributeScheme scheme = options.scheme;
    if (scheme == AttributeScheme::automatic) {
        scheme = (attribute_file || options.attributes) ? AttributeScheme::speaker : AttributeScheme::alternating;
    }
    std::map<std::string, std::vector<std::string>> overrides;
    if (is_dir && fs::exists(dir / "attribute_map.jsonl")) overrides = read_attribute_map(dir / "attribute_map.jsonl");

    const auto train = label_conversations(read_dialogue_file(train_path), scheme, overrides, corpus.stats);

    if (options.vocabulary) {
        corpus.vocabulary = *options.vocabulary;
    } else {
        std::vector<std::vector<std::string>> sentences;
        for (const auto& c : train) {
            for (const auto& t : c.turns) sentences.push_back(t.second);
        }
        corpus.vocabulary = Vocabulary::build(sentences, options.vocab_size);
    }

    if (options.attributes) {
        corpus.attributes = *options.attributes;
    } else if (attribute_file) {
        corpus.attributes = *attribute_file;
    } else if (scheme == AttributeScheme::alternating) {
        corpus.attributes = AttributeVocabulary({"questioner", "helper"});
    } else {
        for (const auto& c : train) {
            for (const auto& t : c.turns) corpus.attributes.intern(t.first);
        }
    }

    corpus.train = index_conversations(train, corpus.vocabulary, corpus.attributes, corpus.stats);
    if (is_dir) {
        for (auto [name, target] : {std::pair{"valid.jsonl", &corpus.valid}, std::pair{"test.jsonl", &corpus.test}}) {
            if (!fs::exists(dir / name)) continue;
            const auto split = label_conversations(read_dialogue_file(dir / name), scheme, overrides, corpus.stats);
            *target = index_conversations(split, corpus.vocabulary, corpus.attributes, corpus.stats);
        }
    }
    logging::info("ingested ", corpus.train.size(), " train / ", corpus.valid.size(), " valid / ", corpus.test.size(),
              " test conversations; vocabulary ", corpus.vocabulary.size(), ", attributes ", corpus.attributes.size(),
              ", dropped turns ", corpus.stats.turns_dropped, ", rejected ", corpus.stats.rejected_ids.size(),
              ", OOV rate ", corpus.stats.oov_rate());
    return corpus;
}

// ---- batching -----------------------------------------------------------

TokenMatrix TokenMatrix::from_rows(const std::vector<std::vector<int>>& sequences) {
    TokenMatrix m;
    m.rows = static_cast<int>(sequences.size());
    for (const auto& s : sequences) m.cols = std::max(m.cols, static_cast<int>(s.size()));
    m.cols = std::max(m.cols, 1);
    m.ids.assign(static_cast<std::size_t>(m.rows) * m.cols, Vocabulary::pad);
    for (int r = 0; r < m.rows; ++r) {
        const auto& s = sequences[static_cast<std::size_t>(r)];
        std::copy(s.begin(), s.end(), m.ids.begin() + static_cast<std::ptrdiff_t>(r) * m.cols);
        m.lengths.push_back(static_cast<int>(s.size()));
    }
    return m;
}

std::vector<int> TokenMatrix::column(int col) const {
    std::vector<int> out(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] = at(r, col);
    return out;
}

Tensor TokenMatrix::mask_column(int col) const {
    std::vector<real> m(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) m[static_cast<std::size_t>(r)] = mask(r, col) ? real(1) : real(0);
    return Tensor::from({rows, 1}, std::move(m));
}

Tensor TokenMatrix::mask_bias() const {
    std::vector<real> m(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m[static_cast<std::size_t>(r) * cols + c] = mask(r, c) ? real(0) : real(-1e9);
    }
    return Tensor::from({rows, cols}, std::move(m));
}

std::vector<int> TokenMatrix::row(int r) const {
    const auto begin = ids.begin() + static_cast<std::ptrdiff_t>(r) * cols;
    return {begin, begin + lengths[static_cast<std::size_t>(r)]};
}

std::size_t TokenMatrix::token_count() const {
    return static_cast<std::size_t>(std::accumulate(lengths.begin(), lengths.end(), 0L));
}

std::vector<int> prepare_turn(std::span<const int> tokens, int max_len) {
    if (max_len < 2) throw std::invalid_argument("max_len must be at least 2");
    const std::size_t keep = std::min(tokens.size(), static_cast<std::size_t>(max_len - 1));
    std::vector<int> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(keep));
    out.push_back(Vocabulary::eos);
    return out;
}

namespace {

template <class T>
void shuffle_in_place(std::vector<T>& items, CounterRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<Conversation>& conversations, const BatchOptions& options,
                                std::uint64_t seed, std::uint64_t epoch) {
    if (options.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (options.max_turns < 2) throw std::invalid_argument("max_turns must be at least 2");
    CounterRng rng = CounterRng(seed, 0xba7c4).fork(epoch);

    std::map<int, std::vector<std::size_t>> by_turns;
    for (std::size_t i = 0; i < conversations.size(); ++i) {
        const int n = std::min(static_cast<int>(conversations[i].turns.size()), options.max_turns);
        if (n >= 2) by_turns[n].push_back(i);
    }
    std::vector<Batch> batches;
    for (auto& [turn_count, members] : by_turns) {
        shuffle_in_place(members, rng);
        for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t end = std::min(members.size(), start + static_cast<std::size_t>(options.batch_size));
            Batch batch;
            batch.turns.resize(static_cast<std::size_t>(turn_count));
            std::vector<std::vector<std::vector<int>>> rows(static_cast<std::size_t>(turn_count));
            for (std::size_t k = start; k < end; ++k) {
                const Conversation& conv = conversations[members[k]];
                batch.ids.push_back(conv.id);
                for (int t = 0; t < turn_count; ++t) {
                    const Turn& turn = conv.turns[static_cast<std::size_t>(t)];
                    rows[static_cast<std::size_t>(t)].push_back(prepare_turn(turn.tokens, options.max_len));
                    batch.turns[static_cast<std::size_t>(t)].attributes.push_back(turn.attribute);
                }
            }
            for (int t = 0; t < turn_count; ++t) {
                batch.turns[static_cast<std::size_t>(t)].tokens = TokenMatrix::from_rows(rows[static_cast<std::size_t>(t)]);
            }
            batches.push_back(std::move(batch));
        }
    }
    shuffle_in_place(batches, rng);
    return batches;
}

// ---- synthetic corpus -----------------------------------------------------

SyntheticCorpus generate_synthetic_persona_corpus(const SyntheticSpec& spec) {
    if (spec.attributes < 2) throw std::invalid_argument("synthetic corpus needs at least 2 attributes");
    if (spec.attributes > kMaxSyntheticAttributes) {
        throw std::invalid_argument("synthetic corpus supports at most " + std::to_string(kMaxSyntheticAttributes) +
                                    " signature blocks, asked for " + std::to_string(spec.attributes));
    }
    if (!(spec.signature_rate > 0.0 && spec.signature_rate <= 1.0)) {
        throw std::invalid_argument("signature_rate must lie in (0, 1]");
    }
    if (spec.conversations < 1 || spec.min_turns < 2 || spec.max_turns < spec.min_turns || spec.min_words < 1 ||
        spec.max_words < spec.min_words || spec.signature_block < 1 || spec.filler_words < 1) {
        throw std::invalid_argument("synthetic corpus: inconsistent size parameters");
    }

    SyntheticCorpus out;
    out.signature_rate = spec.signature_rate;
    out.seed = spec.seed;
    for (int k = 0; k < spec.attributes; ++k) {
        out.labels.push_back(spec.attributes == 2 ? (k == 0 ? "questioner" : "helper") : "speaker" + std::to_string(k));
        std::vector<std::string> block;
        for (int j = 0; j < spec.signature_block; ++j) block.push_back("s" + std::to_string(k) + "w" + std::to_string(j));
        out.signatures.emplace_back(out.labels.back(), std::move(block));
    }
    std::vector<std::string> filler;
    for (int j = 0; j < spec.filler_words; ++j) filler.push_back("f" + std::to_string(j));

    CounterRng rng(spec.seed, 0x5e7);
    auto between = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };

    const int n_valid = static_cast<int>(spec.conversations * spec.valid_fraction);
    const int n_test = static_cast<int>(spec.conversations * spec.test_fraction);
    for (int c = 0; c < spec.conversations; ++c) {
        RawConversation conv;
        conv.id = "syn" + std::to_string(c);
        int first = 0, second = 1;
        if (spec.attributes > 2) {
            first = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.attributes)));
            second = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.attributes - 1)));
            if (second >= first) ++second;
        }
        const int turns = between(spec.min_turns, spec.max_turns);
        for (int t = 0; t < turns; ++t) {
            const int speaker = t % 2 == 0 ? first : second;
            const auto& block = out.signatures[static_cast<std::size_t>(speaker)].second;
            const int words = between(spec.min_words, spec.max_words);
            std::vector<std::string> tokens;
            for (int w = 0; w < words; ++w) {
                if (rng.uniform() < spec.signature_rate) {
                    tokens.push_back(block[rng.below(block.size())]);
                } else {
                    tokens.push_back(filler[rng.below(filler.size())]);
                }
            }
            conv.turns.push_back({out.labels[static_cast<std::size_t>(speaker)], detokenize(tokens)});
        }
        if (c < spec.conversations - n_valid - n_test) {
            out.train.push_back(std::move(conv));
        } else if (c < spec.conversations - n_test) {
            out.valid.push_back(std::move(conv));
        } else {
            out.test.push_back(std::move(conv));
        }
    }
    return out;
}

void write_synthetic_corpus(const fs::path& dir, const SyntheticCorpus& corpus) {
    fs::create_directories(dir);
    write_dialogue_file(dir / "train.jsonl", corpus.train);
    write_dialogue_file(dir / "valid.jsonl", corpus.valid);
    write_dialogue_file(dir / "test.jsonl", corpus.test);
    AttributeVocabulary(corpus.labels).save(dir / "attributes.txt");
    ordered_json manifest;
    manifest["attributes"] = ordered_json::object();
    for (const auto& [label, tokens] : corpus.signatures) manifest["attributes"][label] = tokens;
    manifest["signature_rate"] = corpus.signature_rate;
    manifest["seed"] = corpus.seed;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
}

SignatureManifest read_signature_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    const ordered_json j = ordered_json::parse(in);
    SignatureManifest m;
    for (const auto& [label, tokens] : j.at("attributes").items()) {
        m.signatures.emplace_back(label, tokens.get<std::vector<std::string>>());
    }
    m.signature_rate = j.at("signature_rate").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

}  // namespace phred
