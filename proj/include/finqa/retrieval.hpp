#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "finqa/errors.hpp"

namespace finqa {

struct Chunk {
    int id = 0;  // position order, consecutive from 0
    std::string text;
    int start_token = 0;
    int end_token = 0;  // exclusive
};

namespace detail {

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) tokens.push_back(std::move(current)), current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens, std::size_t from,
                               std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        if (i > from) out += ' ';
        out += tokens[i];
    }
    return out;
}

}  // namespace detail

// Sliding window over whitespace tokens with stride (max - overlap). The
// final partial window is kept; a text at most max_tokens long is a single
// chunk. De-overlapped concatenation reconstructs the token stream.
inline std::vector<Chunk> chunk_text(const std::string& text, int max_tokens,
                                     int overlap_tokens) {
    if (max_tokens <= overlap_tokens || overlap_tokens < 0)
        throw ConfigError("need max_tokens > overlap_tokens >= 0");
    auto tokens = detail::whitespace_tokens(text);
    if (tokens.empty()) throw EmptyText();

    const std::size_t n = tokens.size();
    const std::size_t window = static_cast<std::size_t>(max_tokens);
    const std::size_t stride = static_cast<std::size_t>(max_tokens - overlap_tokens);

    std::vector<Chunk> chunks;
    if (n <= window) {
        chunks.push_back({0, detail::join_tokens(tokens, 0, n), 0, static_cast<int>(n)});
        return chunks;
    }
    for (std::size_t start = 0; start < n; start += stride) {
        std::size_t end = std::min(start + window, n);
        chunks.push_back({static_cast<int>(chunks.size()),
                          detail::join_tokens(tokens, start, end), static_cast<int>(start),
                          static_cast<int>(end)});
    }
    return chunks;
}

// Embeds text batches into fixed-dimension dense vectors. embed() fixes the
// vector space (stateful embedders fit on the corpus batch); embed_query()
// maps a query into that same space.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::vector<double> embed_query(const std::string& text) {
        return embed({text})[0];
    }
    virtual std::string id() const = 0;
};

// Deterministic lexical default: term frequency scaled by smoothed inverse
// document frequency over the corpus it was fitted on, L2-normalized.
// Tokenization is lowercase runs of alphanumerics.
class TfidfEmbedder final : public Embedder {
public:
    static std::vector<std::string> tokenize(const std::string& text) {
        std::vector<std::string> tokens;
        std::string current;
        for (char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                current.push_back(
                    static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            } else if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        }
        if (!current.empty()) tokens.push_back(std::move(current));
        return tokens;
    }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        fit(texts);
        std::vector<std::vector<double>> vectors;
        vectors.reserve(texts.size());
        for (const auto& text : texts) vectors.push_back(vectorize(text));
        return vectors;
    }

    std::vector<double> embed_query(const std::string& text) override {
        if (idf_.empty()) fit({text});
        return vectorize(text);
    }

    std::string id() const override { return "tfidf-v1"; }

private:
    void fit(const std::vector<std::string>& corpus) {
        vocab_.clear();
        idf_.clear();
        std::map<std::string, std::size_t> doc_freq;
        for (const auto& text : corpus) {
            auto tokens = tokenize(text);
            std::sort(tokens.begin(), tokens.end());
            tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
            for (auto& t : tokens) ++doc_freq[t];
        }
        const double n = static_cast<double>(corpus.size());
        std::size_t dim = 0;
        for (const auto& [term, df] : doc_freq) {
            vocab_.emplace(term, dim++);
            idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(df))) + 1.0);
        }
    }

    std::vector<double> vectorize(const std::string& text) const {
        std::vector<double> v(idf_.size(), 0.0);
        for (const auto& token : tokenize(text)) {
            auto it = vocab_.find(token);
            if (it != vocab_.end()) v[it->second] += idf_[it->second];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        return v;
    }

    std::map<std::string, std::size_t> vocab_;
    std::vector<double> idf_;
};

inline std::unique_ptr<Embedder> make_embedder(const std::string& embedder_id) {
    if (embedder_id == "tfidf-v1") return std::make_unique<TfidfEmbedder>();
    throw ConfigError("unknown embedder id: " + embedder_id);
}

// Immutable after build; one vector per chunk.
struct ChunkIndex {
    std::vector<Chunk> chunks;
    std::vector<std::vector<double>> vectors;
    std::string embedder_id;
    std::shared_ptr<Embedder> embedder;  // retained for query embedding
};

inline ChunkIndex build_index(std::vector<Chunk> chunks, std::shared_ptr<Embedder> embedder) {
    if (chunks.empty()) throw EmbedderFailure("no chunks to index");
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = embedder->embed(texts);
    if (vectors.size() != chunks.size())
        throw EmbedderFailure("embedder returned " + std::to_string(vectors.size()) +
                              " vectors for " + std::to_string(chunks.size()) + " chunks");
    return {std::move(chunks), std::move(vectors), embedder->id(), std::move(embedder)};
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    for (std::size_t i = n; i < a.size(); ++i) na += a[i] * a[i];
    for (std::size_t i = n; i < b.size(); ++i) nb += b[i] * b[i];
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct ScoredChunk {
    Chunk chunk;
    double score = 0.0;  // cosine similarity in [-1, 1]
};

// Best min(k, |chunks|) chunks by cosine score, ties broken by ascending id.
inline std::vector<ScoredChunk> top_k(const ChunkIndex& index, const std::string& query,
                                      int k) {
    if (k < 1) throw ConfigError("k must be >= 1");
    auto query_vec = index.embedder->embed_query(query);
    std::vector<ScoredChunk> scored;
    scored.reserve(index.chunks.size());
    for (std::size_t i = 0; i < index.chunks.size(); ++i)
        scored.push_back({index.chunks[i], cosine_similarity(index.vectors[i], query_vec)});
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk.id < b.chunk.id;
    });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    return scored;
}

}  // namespace finqa
