// SPDX-License-Identifier: Apache-2.0
//
// Dialogue corpora with one attribute (persona) label per utterance.
//
// On disk a split is UTF-8 JSON lines, one conversation per line:
//   {"id": "c1", "turns": [{"speaker": "questioner", "text": "..."}, ...]}
// A data directory holds train.jsonl (required), valid.jsonl and test.jsonl,
// plus optionally attributes.txt (one label per line, line number = index)
// and attribute_map.jsonl ({"id": ..., "speakers": [...]}, one per
// conversation) which overrides the per-turn speaker labels.

#ifndef PHRED_CORPUS_HPP
#define PHRED_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phred/tensor.hpp"
#include "phred/text.hpp"

namespace phred {

struct RawTurn {
    std::string speaker;
    std::string text;
};

struct RawConversation {
    std::string id;
    std::vector<RawTurn> turns;
};

std::vector<RawConversation> read_dialogue_file(const std::filesystem::path& path);
void write_dialogue_file(const std::filesystem::path& path, const std::vector<RawConversation>& conversations);

struct Turn {
    int attribute = 0;
    std::vector<int> tokens;
};

struct Conversation {
    std::string id;
    std::vector<Turn> turns;
};

// How utterances get their attribute label.
enum class AttributeScheme {
    automatic,    // speaker labels when attributes.txt exists, alternating otherwise
    speaker,      // the "speaker" field (or the attribute map override)
    alternating,  // first turn "questioner", then parity alternates with "helper"
};

struct IngestOptions {
    int vocab_size = 2000;
    AttributeScheme scheme = AttributeScheme::automatic;
    // Pre-built vocabularies (e.g. from a snapshot); built from train otherwise.
    std::optional<Vocabulary> vocabulary;
    std::optional<AttributeVocabulary> attributes;
};

struct IngestStats {
    std::size_t conversations_read = 0;
    std::size_t conversations_kept = 0;
    std::size_t turns_dropped = 0;
    std::size_t tokens = 0;
    std::size_t oov_tokens = 0;
    std::vector<std::string> rejected_ids;

    double oov_rate() const { return tokens == 0 ? 0.0 : static_cast<double>(oov_tokens) / static_cast<double>(tokens); }
};

struct Corpus {
    std::vector<Conversation> train;
    std::vector<Conversation> valid;
    std::vector<Conversation> test;
    Vocabulary vocabulary;
    AttributeVocabulary attributes;
    IngestStats stats;
};

// Tokenised but not yet indexed; attributes are labels.
struct LabeledConversation {
    std::string id;
    std::vector<std::pair<std::string, std::vector<std::string>>> turns;
};

// Assigns labels and tokenises. Whitespace-only turns are dropped and counted;
// conversations left with fewer than two turns, with a multi-token label, or
// whose override speaker list disagrees with the turn count are rejected.
std::vector<LabeledConversation> label_conversations(
    const std::vector<RawConversation>& raw, AttributeScheme scheme,
    const std::map<std::string, std::vector<std::string>>& speaker_overrides, IngestStats& stats);

// Maps tokens (OOV -> UNK) and labels. Unknown labels throw.
std::vector<Conversation> index_conversations(const std::vector<LabeledConversation>& labeled,
                                              const Vocabulary& vocabulary, const AttributeVocabulary& attributes,
                                              IngestStats& stats);

std::map<std::string, std::vector<std::string>> read_attribute_map(const std::filesystem::path& path);

// Reads a data directory (see header comment) or a single train file.
Corpus ingest(const std::filesystem::path& path, const IngestOptions& options = {});

// ---- batching -----------------------------------------------------------

// Padded (rows x cols) token ids with per-row true lengths.
struct TokenMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> ids;
    std::vector<int> lengths;

    static TokenMatrix from_rows(const std::vector<std::vector<int>>& sequences);
    int at(int row, int col) const { return ids[static_cast<std::size_t>(row) * cols + col]; }
    bool mask(int row, int col) const { return col < lengths[static_cast<std::size_t>(row)]; }
    std::vector<int> column(int col) const;
    // (rows x 1) constant, 1 where col < length.
    Tensor mask_column(int col) const;
    // (rows x cols) constant attention bias: 0 inside the sequence, large negative on padding.
    Tensor mask_bias() const;
    std::vector<int> row(int r) const;
    std::size_t token_count() const;
};

struct TurnBatch {
    TokenMatrix tokens;
    std::vector<int> attributes;  // c_i per row
};

struct Batch {
    std::vector<std::string> ids;
    std::vector<TurnBatch> turns;

    int size() const { return static_cast<int>(ids.size()); }
    int turn_count() const { return static_cast<int>(turns.size()); }
    const std::vector<int>& source_attributes(int turn) const { return turns[static_cast<std::size_t>(turn)].attributes; }
    // c_{i+1}: the attribute of the responding turn.
    const std::vector<int>& target_attributes(int turn) const { return turns[static_cast<std::size_t>(turn) + 1].attributes; }
};

struct BatchOptions {
    int batch_size = 32;
    int max_turns = 5;
    int max_len = 20;
};

// Truncates to max_len - 1 tokens and appends EOS.
std::vector<int> prepare_turn(std::span<const int> tokens, int max_len);

// Keeps the first max_turns turns of every conversation and groups
// conversations of equal turn count into batches. Order is a deterministic
// function of (seed, epoch).
std::vector<Batch> make_batches(const std::vector<Conversation>& conversations, const BatchOptions& options,
                                std::uint64_t seed, std::uint64_t epoch = 0);

// ---- synthetic persona corpus --------------------------------------------

inline constexpr int kMaxSyntheticAttributes = 12;

struct SyntheticSpec {
    int conversations = 2000;
    int attributes = 2;
    double signature_rate = 0.8;
    std::uint64_t seed = 1;
    int signature_block = 6;
    int filler_words = 24;
    int min_turns = 2;
    int max_turns = 4;
    int min_words = 3;
    int max_words = 8;
    double valid_fraction = 0.05;
    double test_fraction = 0.05;
};

struct SyntheticCorpus {
    std::vector<RawConversation> train;
    std::vector<RawConversation> valid;
    std::vector<RawConversation> test;
    std::vector<std::string> labels;
    // label -> signature tokens of that attribute
    std::vector<std::pair<std::string, std::vector<std::string>>> signatures;
    double signature_rate = 0;
    std::uint64_t seed = 0;
};

// Alternating-speaker conversations where each token of a turn by attribute k
// is drawn from k's signature block with probability signature_rate and from
// the shared filler words otherwise.
SyntheticCorpus generate_synthetic_persona_corpus(const SyntheticSpec& spec);
// Writes train/valid/test.jsonl, attributes.txt and manifest.json.
void write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);

struct SignatureManifest {
    std::vector<std::pair<std::string, std::vector<std::string>>> signatures;
    double signature_rate = 0;
    std::uint64_t seed = 0;
};

SignatureManifest read_signature_manifest(const std::filesystem::path& path);

}  // namespace phred

#endif  // PHRED_CORPUS_HPP
