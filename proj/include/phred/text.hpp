// SPDX-License-Identifier: Apache-2.0

#ifndef PHRED_TEXT_HPP
#define PHRED_TEXT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace phred {

// Lowercases ASCII, splits on whitespace and emits every ASCII punctuation
// character as its own token ("Don't!" -> "don ' t !").
std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

class Vocabulary {
public:
    static constexpr int pad = 0;
    static constexpr int unk = 1;
    static constexpr int eos = 2;
    static constexpr int bos = 3;
    static constexpr int reserved = 4;

    Vocabulary();

    // Keeps the max_size - 4 most frequent tokens (ties broken by token text);
    // everything else maps to UNK.
    static Vocabulary build(const std::vector<std::vector<std::string>>& sentences, int max_size);
    // Tokens in index order, reserved entries first.
    static Vocabulary from_tokens(std::vector<std::string> tokens);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int size() const { return static_cast<int>(tokens_.size()); }
    int index(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(int index) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(std::span<const std::string> tokens) const;
    // Stops at EOS; drops PAD and BOS.
    std::vector<std::string> decode(std::span<const int> ids) const;
    std::string fingerprint() const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Attribute (persona) labels. No reserved entries and no unknown fallback:
// looking up a label that was never registered is an error.
class AttributeVocabulary {
public:
    AttributeVocabulary() = default;
    explicit AttributeVocabulary(std::vector<std::string> labels);

    static AttributeVocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int size() const { return static_cast<int>(labels_.size()); }
    std::optional<int> find(std::string_view label) const;
    // Throws std::invalid_argument naming the label when it is unknown.
    int index(std::string_view label) const;
    const std::string& label(int index) const;
    const std::vector<std::string>& labels() const { return labels_; }
    // Appends if new; returns the index either way.
    int intern(const std::string& label);
    std::string fingerprint() const;

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace phred

#endif  // PHRED_TEXT_HPP
