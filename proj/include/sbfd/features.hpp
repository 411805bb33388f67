#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sbfd/util.hpp"

namespace sbfd {

// Lowercased whitespace tokenization with punctuation stripped from token
// edges. Word-level on purpose: there is no pretrained subword vocabulary
// here. UTF-8 passes through untouched apart from NBSP and ideographic
// space, which count as separators.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::string norm;
    norm.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c == 0xc2 && i + 1 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0xa0) {
            norm += ' ';
            i += 2;
        } else if (c == 0xe3 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
                   static_cast<unsigned char>(text[i + 2]) == 0x80) {
            norm += ' ';
            i += 3;
        } else {
            norm += static_cast<char>(std::isspace(c) ? ' ' : std::tolower(c));
            ++i;
        }
    }
    auto is_edge_punct = [](char ch) {
        return std::ispunct(static_cast<unsigned char>(ch)) != 0;
    };
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < norm.size()) {
        while (i < norm.size() && norm[i] == ' ') ++i;
        std::size_t start = i;
        while (i < norm.size() && norm[i] != ' ') ++i;
        std::string_view tok(norm.data() + start, i - start);
        while (!tok.empty() && is_edge_punct(tok.front())) tok.remove_prefix(1);
        while (!tok.empty() && is_edge_punct(tok.back())) tok.remove_suffix(1);
        if (!tok.empty()) tokens.emplace_back(tok);
    }
    return tokens;
}

// Token ids dense in [0, size); the four reserved ids are fixed.
class Vocabulary {
  public:
    static constexpr int kPadId = 0;
    static constexpr int kClsId = 1;
    static constexpr int kSepId = 2;
    static constexpr int kUnkId = 3;

    Vocabulary() {
        for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) add(t);
    }

    int add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    int lookup(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnkId : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) != 0; }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    std::string serialize() const {
        std::string out;
        for (std::size_t i = 0; i < tokens_.size(); ++i)
            out += tokens_[i] + "\t" + std::to_string(i) + "\n";
        return out;
    }

    static Vocabulary parse(std::string_view text) {
        Vocabulary v;
        const auto lines = split_lines(text);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto fields = split(lines[i], '\t');
            if (fields.size() != 2)
                throw std::runtime_error("vocabulary line " + std::to_string(i + 1) + ": expected token<TAB>id");
            const long id = parse_long(fields[1], "vocabulary id");
            if (id < 4) {
                if (id != v.lookup(std::string(fields[0])) || v.token(static_cast<int>(id)) != fields[0])
                    throw std::runtime_error("vocabulary line " + std::to_string(i + 1) + ": reserved id mismatch");
                continue;
            }
            const int got = v.add(std::string(fields[0]));
            if (got != id)
                throw std::runtime_error("vocabulary line " + std::to_string(i + 1) + ": ids are not dense");
        }
        return v;
    }

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs) {
    Vocabulary v;
    for (const auto& doc : docs)
        for (const auto& tok : doc) v.add(tok);
    return v;
}

// Smoothed idf: ln((1+N)/(1+df)) + 1, finite and positive even for terms
// present in every document.
struct TfIdfModel {
    std::map<std::string, int> df;  // ordered, so serialization is stable
    int n_docs = 0;

    double idf(const std::string& term) const {
        auto it = df.find(term);
        const int d = it == df.end() ? 0 : it->second;
        return std::log((1.0 + n_docs) / (1.0 + d)) + 1.0;
    }

    std::string serialize() const {
        std::string out = std::to_string(n_docs) + "\n";
        for (const auto& [term, d] : df) out += term + "\t" + std::to_string(d) + "\n";
        return out;
    }

    static TfIdfModel parse(std::string_view text) {
        TfIdfModel m;
        const auto lines = split_lines(text);
        if (lines.empty()) return m;
        m.n_docs = static_cast<int>(parse_long(lines[0], "tfidf n_docs"));
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto fields = split(lines[i], '\t');
            if (fields.size() != 2)
                throw std::runtime_error("tfidf line " + std::to_string(i + 1) + ": expected term<TAB>df");
            m.df[std::string(fields[0])] = static_cast<int>(parse_long(fields[1], "tfidf df"));
        }
        return m;
    }
};

inline TfIdfModel fit_tfidf(const std::vector<std::vector<std::string>>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("fit_tfidf: corpus is empty");
    TfIdfModel m;
    m.n_docs = static_cast<int>(corpus.size());
    for (const auto& doc : corpus) {
        const std::set<std::string> distinct(doc.begin(), doc.end());
        for (const auto& term : distinct) ++m.df[term];
    }
    return m;
}

struct Keyword {
    std::string term;
    double weight = 0.0;

    bool operator==(const Keyword&) const = default;
};

using KeywordSet = std::vector<Keyword>;

// Top-k terms by tf*idf with raw in-document counts as tf. Ties break by
// lexicographic term order so extraction is deterministic.
inline KeywordSet extract_keywords(const TfIdfModel& model, const std::vector<std::string>& doc, int k) {
    if (k < 1) throw std::invalid_argument("extract_keywords: k must be at least 1");
    std::map<std::string, int> tf;
    for (const auto& tok : doc) ++tf[tok];
    KeywordSet all;
    all.reserve(tf.size());
    for (const auto& [term, count] : tf) all.push_back({term, count * model.idf(term)});
    std::sort(all.begin(), all.end(), [](const Keyword& a, const Keyword& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return a.term < b.term;
    });
    if (all.size() > static_cast<std::size_t>(k)) all.resize(static_cast<std::size_t>(k));
    return all;
}

// term -> domain tag
using Gazetteer = std::map<std::string, std::string>;

inline Gazetteer parse_gazetteer(std::string_view text, const std::string& source) {
    Gazetteer g;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (trim(line).empty() || line.front() == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 2)
            throw std::runtime_error(source + ":" + std::to_string(i + 1) + ": expected term<TAB>tag");
        g[std::string(trim(fields[0]))] = std::string(trim(fields[1]));
    }
    return g;
}

inline Gazetteer load_gazetteer(const std::string& path) { return parse_gazetteer(read_file(path), path); }

// Fixed-length model input: [CLS] text [SEP] features [SEP] then PAD, with a
// segment channel separating title tokens (0) from feature tokens (1).
struct FusedSequence {
    std::vector<int> ids;
    std::vector<int> segments;  // 0 = text side, 1 = feature side
    std::vector<int> mask;      // 1 on non-PAD positions

    std::size_t size() const { return ids.size(); }
};

// Text tokens are truncated before feature tokens when the budget is tight.
inline FusedSequence fuse(const std::vector<std::string>& text_tokens,
                          const std::vector<std::string>& feature_tokens, const Vocabulary& vocab,
                          int max_len) {
    if (max_len < 4) throw std::invalid_argument("fuse: max_len must be at least 4");
    const std::size_t budget = static_cast<std::size_t>(max_len) - 3;
    std::size_t keep_text = text_tokens.size();
    std::size_t keep_feat = feature_tokens.size();
    while (keep_text + keep_feat > budget && keep_text > 0) --keep_text;
    while (keep_text + keep_feat > budget) --keep_feat;

    FusedSequence seq;
    seq.ids.reserve(static_cast<std::size_t>(max_len));
    auto push = [&seq](int id, int segment, int m) {
        seq.ids.push_back(id);
        seq.segments.push_back(segment);
        seq.mask.push_back(m);
    };
    push(Vocabulary::kClsId, 0, 1);
    for (std::size_t i = 0; i < keep_text; ++i) push(vocab.lookup(text_tokens[i]), 0, 1);
    push(Vocabulary::kSepId, 0, 1);
    for (std::size_t i = 0; i < keep_feat; ++i) push(vocab.lookup(feature_tokens[i]), 1, 1);
    push(Vocabulary::kSepId, 1, 1);
    while (seq.ids.size() < static_cast<std::size_t>(max_len)) push(Vocabulary::kPadId, 0, 0);
    return seq;
}

// Feature tokens for one side of a pair: the domain string when present,
// otherwise the document's own top-k keywords; gazetteer tags of matching
// text tokens are appended either way.
inline std::vector<std::string> build_feature_tokens(const std::vector<std::string>& text_tokens,
                                                     const std::optional<std::string>& domain,
                                                     const TfIdfModel& tfidf, int keyword_k,
                                                     const Gazetteer& gazetteer) {
    std::vector<std::string> feats;
    if (domain && !trim(*domain).empty()) {
        feats = tokenize(*domain);
    } else if (tfidf.n_docs > 0 && keyword_k > 0 && !text_tokens.empty()) {
        for (const auto& kw : extract_keywords(tfidf, text_tokens, keyword_k)) feats.push_back(kw.term);
    }
    std::set<std::string> seen_tags;
    for (const auto& tok : text_tokens) {
        auto it = gazetteer.find(tok);
        if (it != gazetteer.end() && seen_tags.insert(it->second).second) feats.push_back(it->second);
    }
    return feats;
}

}  // namespace sbfd
