#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <sstream>

#include "finqa/retrieval.hpp"
#include "support/oracles.hpp"

using namespace finqa;

namespace {

std::string make_text(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> numbered_tokens(int n) {
    std::vector<std::string> tokens;
    for (int i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(i));
    return tokens;
}

// De-overlapped concatenation: all of chunk 0, then each later chunk minus
// its first `overlap` tokens.
std::vector<std::string> reconstruct(const std::vector<Chunk>& chunks, int overlap) {
    std::vector<std::string> tokens;
    for (std::size_t k = 0; k < chunks.size(); ++k) {
        std::istringstream in(chunks[k].text);
        std::vector<std::string> chunk_tokens;
        std::string tok;
        while (in >> tok) chunk_tokens.push_back(tok);
        std::size_t skip = k == 0 ? 0 : std::min<std::size_t>(chunk_tokens.size(),
                                                              static_cast<std::size_t>(overlap));
        // tokens already covered by the previous chunk may extend past the
        // overlap when the final window is clamped
        for (std::size_t i = skip; i < chunk_tokens.size(); ++i) {
            int abs_index = chunks[k].start_token + static_cast<int>(i);
            if (!tokens.empty() && abs_index < static_cast<int>(tokens.size())) continue;
            tokens.push_back(chunk_tokens[i]);
        }
    }
    return tokens;
}

}  // namespace

TEST_CASE("chunking window arithmetic", "[retrieval]") {
    auto ten = make_text(numbered_tokens(10));

    auto no_overlap = chunk_text(ten, 4, 0);
    REQUIRE(no_overlap.size() == 3);
    CHECK(no_overlap[0].end_token - no_overlap[0].start_token == 4);
    CHECK(no_overlap[1].end_token - no_overlap[1].start_token == 4);
    CHECK(no_overlap[2].end_token - no_overlap[2].start_token == 2);

    auto with_overlap = chunk_text(ten, 4, 2);
    REQUIRE(with_overlap.size() == 5);
    for (std::size_t k = 0; k < with_overlap.size(); ++k) {
        CHECK(with_overlap[k].id == static_cast<int>(k));
        CHECK(with_overlap[k].start_token == static_cast<int>(2 * k));
    }
}

TEST_CASE("short text yields a single chunk equal to the text", "[retrieval]") {
    auto chunks = chunk_text("alpha beta gamma", 4, 2);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text == "alpha beta gamma");
    CHECK(chunks[0].start_token == 0);
    CHECK(chunks[0].end_token == 3);
}

TEST_CASE("chunking rejects bad inputs", "[retrieval]") {
    CHECK_THROWS_AS(chunk_text("", 4, 0), EmptyText);
    CHECK_THROWS_AS(chunk_text("   \n\t ", 4, 0), EmptyText);
    CHECK_THROWS_AS(chunk_text("a b", 4, 4), ConfigError);
    CHECK_THROWS_AS(chunk_text("a b", 0, 0), ConfigError);
}

TEST_CASE("de-overlapped concatenation reconstructs the token stream",
          "[retrieval][property]") {
    testsupport::DetRng rng(31337);
    for (int iter = 0; iter < 200; ++iter) {
        int n = rng.uniform_int(1, 60);
        int max_tokens = rng.uniform_int(1, 12);
        int overlap = rng.uniform_int(0, max_tokens - 1);
        auto tokens = numbered_tokens(n);
        auto chunks = chunk_text(make_text(tokens), max_tokens, overlap);

        for (std::size_t k = 0; k < chunks.size(); ++k) {
            CHECK(chunks[k].id == static_cast<int>(k));
            CHECK(chunks[k].end_token > chunks[k].start_token);
            CHECK(chunks[k].end_token - chunks[k].start_token <= max_tokens);
        }
        CHECK(reconstruct(chunks, overlap) == tokens);
    }
}

TEST_CASE("build_index embeds every chunk once", "[retrieval]") {
    std::vector<Chunk> chunks;
    for (int i = 0; i < 5; ++i)
        chunks.push_back({i, "net revenue rose in 201" + std::to_string(i), i, i + 1});
    auto index = build_index(chunks, std::make_shared<TfidfEmbedder>());
    CHECK(index.vectors.size() == 5);
    CHECK(index.embedder_id == "tfidf-v1");

    // identical texts embed identically, rebuilds reproduce the vectors
    auto index2 = build_index(chunks, std::make_shared<TfidfEmbedder>());
    CHECK(index.vectors == index2.vectors);
}

TEST_CASE("self-similarity is one and scores stay in range", "[retrieval]") {
    std::vector<Chunk> chunks = {{0, "net revenue rose", 0, 3},
                                 {1, "employee headcount", 3, 5},
                                 {2, "cash dividends paid", 5, 8}};
    auto index = build_index(chunks, std::make_shared<TfidfEmbedder>());
    for (const auto& v : index.vectors) {
        CHECK_THAT(cosine_similarity(v, v), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    auto hits = top_k(index, "net revenue rose", 3);
    for (const auto& hit : hits) {
        CHECK(hit.score <= 1.0 + 1e-9);
        CHECK(hit.score >= -1.0 - 1e-9);
    }
    CHECK(hits[0].chunk.id == 0);
    CHECK_THAT(hits[0].score, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("tf-idf cosine matches the hand-derived value", "[retrieval]") {
    // Corpus of three chunks with fully distinct vocabularies: every term
    // has document frequency 1, so all idf weights are equal and the cosine
    // between the query "revenue" and chunk 0 reduces to 1/sqrt(3).
    std::vector<Chunk> chunks = {{0, "net revenue rose", 0, 3},
                                 {1, "employee headcount", 3, 5},
                                 {2, "cash dividends paid", 5, 8}};
    auto index = build_index(chunks, std::make_shared<TfidfEmbedder>());
    auto hits = top_k(index, "revenue", 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].chunk.id == 0);
    CHECK_THAT(hits[0].score, Catch::Matchers::WithinAbs(1.0 / std::sqrt(3.0), 1e-9));
    CHECK_THAT(hits[1].score, Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THAT(hits[2].score, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("top_k truncates, breaks ties by id, and is deterministic", "[retrieval]") {
    std::vector<Chunk> chunks = {{0, "alpha beta", 0, 2},
                                 {1, "gamma delta", 2, 4},
                                 {2, "alpha beta", 4, 6}};
    auto index = build_index(chunks, std::make_shared<TfidfEmbedder>());

    auto hits = top_k(index, "alpha", 10);
    REQUIRE(hits.size() == 3);  // k larger than the corpus truncates
    CHECK(hits[0].chunk.id == 0);
    CHECK(hits[1].chunk.id == 2);  // identical text, higher id loses the tie
    CHECK(hits[0].score == hits[1].score);

    auto again = top_k(index, "alpha", 10);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].chunk.id == again[i].chunk.id);
        CHECK(hits[i].score == again[i].score);
    }
}

TEST_CASE("empty queries score zero everywhere", "[retrieval]") {
    std::vector<Chunk> chunks = {{0, "alpha beta", 0, 2}, {1, "gamma delta", 2, 4}};
    auto index = build_index(chunks, std::make_shared<TfidfEmbedder>());
    auto hits = top_k(index, "", 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].score == 0.0);
    CHECK(hits[1].score == 0.0);
    CHECK(hits[0].chunk.id == 0);  // tie broken by id
}

TEST_CASE("verbatim-query chunks rank first across random corpora",
          "[retrieval][property]") {
    testsupport::DetRng rng(777);
    for (int iter = 0; iter < 100; ++iter) {
        int n_chunks = rng.uniform_int(2, 8);
        int target = rng.uniform_int(0, n_chunks - 1);
        // query vocabulary is disjoint from filler vocabulary
        std::string query = "q" + std::to_string(rng.uniform_int(0, 99)) + "a q" +
                            std::to_string(rng.uniform_int(100, 199)) + "b";
        std::vector<Chunk> chunks;
        for (int i = 0; i < n_chunks; ++i) {
            std::string text;
            if (i == target) {
                text = "filler" + std::to_string(i) + " " + query + " tail" +
                       std::to_string(rng.uniform_int(0, 9));
            } else {
                text = "filler" + std::to_string(i) + " noise" +
                       std::to_string(rng.uniform_int(0, 9999));
            }
            chunks.push_back({i, text, 2 * i, 2 * i + 2});
        }
        auto index = build_index(chunks, std::make_shared<TfidfEmbedder>());
        auto hits = top_k(index, query, 1);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].chunk.id == target);
    }
}
