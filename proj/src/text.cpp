// SPDX-License-Identifier: Apache-2.0

#include "phred/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace phred {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            tokens.emplace_back(1, ch);
        } else {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash) {
    for (char c : data) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
}

std::string fingerprint_of(const std::vector<std::string>& items) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : items) {
        h = fnv1a64(s, h);
        h = fnv1a64(std::string_view("\n", 1), h);
    }
    return hex64(h);
}

}  // namespace

// ---- Vocabulary ---------------------------------------------------------

namespace {
const char* const kReserved[Vocabulary::reserved] = {"<pad>", "<unk>", "</s>", "<s>"};
}

Vocabulary::Vocabulary() {
    for (int i = 0; i < reserved; ++i) {
        tokens_.emplace_back(kReserved[i]);
        index_.emplace(tokens_.back(), i);
    }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < static_cast<std::size_t>(reserved)) throw std::invalid_argument("vocabulary: missing reserved entries");
    for (int i = 0; i < reserved; ++i) {
        if (tokens[static_cast<std::size_t>(i)] != kReserved[i]) {
            throw std::invalid_argument("vocabulary: entry " + std::to_string(i) + " must be " + kReserved[i]);
        }
    }
    Vocabulary v;
    for (std::size_t i = reserved; i < tokens.size(); ++i) {
        if (!v.index_.emplace(tokens[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("vocabulary: duplicate token '" + tokens[i] + "'");
        }
        v.tokens_.push_back(std::move(tokens[i]));
    }
    return v;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences, int max_size) {
    if (max_size < reserved) throw std::invalid_argument("vocabulary: size must be at least 4");
    std::map<std::string, long> counts;
    for (const auto& s : sentences) {
        for (const auto& t : s) {
            if (std::find(std::begin(kReserved), std::end(kReserved), t) == std::end(kReserved)) ++counts[t];
        }
    }
    std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens(std::begin(kReserved), std::end(kReserved));
    for (const auto& [token, count] : ranked) {
        if (static_cast<int>(tokens.size()) >= max_size) break;
        tokens.push_back(token);
    }
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return from_tokens(read_lines(path)); }
void Vocabulary::save(const std::filesystem::path& path) const { write_lines(path, tokens_); }

int Vocabulary::index(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(int index) const {
    if (index < 0 || index >= size()) throw std::out_of_range("vocabulary: index " + std::to_string(index) + " out of range");
    return tokens_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(index(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
    std::vector<std::string> out;
    for (int id : ids) {
        if (id == eos) break;
        if (id == pad || id == bos) continue;
        out.push_back(token(id));
    }
    return out;
}

std::string Vocabulary::fingerprint() const { return fingerprint_of(tokens_); }

// ---- AttributeVocabulary ------------------------------------------------

AttributeVocabulary::AttributeVocabulary(std::vector<std::string> labels) {
    for (auto& l : labels) {
        if (l.empty()) throw std::invalid_argument("attribute vocabulary: empty label");
        if (find(l)) throw std::invalid_argument("attribute vocabulary: duplicate label '" + l + "'");
        intern(l);
    }
}

AttributeVocabulary AttributeVocabulary::load(const std::filesystem::path& path) {
    return AttributeVocabulary(read_lines(path));
}

void AttributeVocabulary::save(const std::filesystem::path& path) const { write_lines(path, labels_); }

std::optional<int> AttributeVocabulary::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int AttributeVocabulary::index(std::string_view label) const {
    if (auto i = find(label)) return *i;
    throw std::invalid_argument("unknown attribute label '" + std::string(label) + "'");
}

const std::string& AttributeVocabulary::label(int index) const {
    if (index < 0 || index >= size()) {
        throw std::out_of_range("attribute vocabulary: index " + std::to_string(index) + " out of range");
    }
    return labels_[static_cast<std::size_t>(index)];
}

int AttributeVocabulary::intern(const std::string& label) {
    if (auto i = find(label)) return *i;
    labels_.push_back(label);
    index_.emplace(label, size() - 1);
    return size() - 1;
}

std::string AttributeVocabulary::fingerprint() const { return fingerprint_of(labels_); }

}  // namespace phred
