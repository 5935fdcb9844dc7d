#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "finqa/dataset.hpp"
#include "finqa/digest.hpp"
#include "finqa/errors.hpp"
#include "finqa/genclient.hpp"

namespace finqa {

enum class SerializationMethod { naive, llm_zero_shot, llm_few_shot };

inline std::string_view serialization_method_name(SerializationMethod m) {
    switch (m) {
        case SerializationMethod::naive: return "naive";
        case SerializationMethod::llm_zero_shot: return "llm_zero_shot";
        case SerializationMethod::llm_few_shot: return "llm_few_shot";
    }
    return "unknown";
}

inline SerializationMethod serialization_method_from_name(std::string_view name) {
    if (name == "naive") return SerializationMethod::naive;
    if (name == "llm_zero_shot") return SerializationMethod::llm_zero_shot;
    if (name == "llm_few_shot") return SerializationMethod::llm_few_shot;
    throw ConfigError("unknown serialization method: " + std::string(name));
}

struct SerializedTable {
    std::string text;
    SerializationMethod method;
    std::string source_table_hash;
};

inline std::string table_digest(const Table& table) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& row : table) {
        for (const auto& cell : row) {
            h = fnv1a64(cell, h);
            h = fnv1a64("\x1f", h);
        }
        h = fnv1a64("\x1e", h);
    }
    return to_hex(h);
}

namespace detail {

inline bool blank(const std::string& s) {
    return trim(s).empty();
}

// Column header for data column j: the stacked header cells joined with
// " - " (multi-row headers come from subheader tables).
inline std::string column_header(const Table& table, int header_rows, std::size_t j) {
    std::string out;
    for (int h = 0; h < header_rows; ++h) {
        const auto& cell = table[static_cast<std::size_t>(h)][j];
        if (blank(cell)) continue;
        if (!out.empty()) out += " - ";
        out += std::string(trim(cell));
    }
    return out;
}

}  // namespace detail

// One sentence per non-empty data cell, row-major:
//   "The {row label} of {column header} is {cell}."
// A single-row table has no header row and degrades to
//   "The value of column {j} is {cell}."  (j = 1-based column index)
// Throws EmptyTable when there is nothing to say.
inline SerializedTable serialize_naive(const Table& table, int header_rows = 1) {
    if (table.empty()) throw EmptyTable();
    std::vector<std::string> sentences;

    if (table.size() == 1) {
        const auto& row = table[0];
        for (std::size_t j = 1; j < row.size(); ++j) {
            if (detail::blank(row[j])) continue;
            sentences.push_back("The value of column " + std::to_string(j) + " is " +
                                std::string(detail::trim(row[j])) + ".");
        }
    } else {
        if (header_rows < 1) header_rows = 1;
        for (std::size_t r = static_cast<std::size_t>(header_rows); r < table.size(); ++r) {
            const auto& row = table[r];
            std::string label(detail::trim(row.empty() ? std::string() : row[0]));
            for (std::size_t j = 1; j < row.size(); ++j) {
                if (detail::blank(row[j])) continue;
                std::string header = detail::column_header(table, header_rows, j);
                sentences.push_back("The " + (label.empty() ? "value" : label) + " of " +
                                    (header.empty() ? "column " + std::to_string(j) : header) +
                                    " is " + std::string(detail::trim(row[j])) + ".");
            }
        }
    }

    if (sentences.empty()) throw EmptyTable();
    std::string text;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (i > 0) text += ' ';
        text += sentences[i];
    }
    return {text, SerializationMethod::naive, table_digest(table)};
}

// Pipe-delimited rendering used inside serialization prompts.
inline std::string render_table_pipes(const Table& table) {
    std::string out;
    for (const auto& row : table) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j > 0) out += " | ";
            out += row[j];
        }
        out += '\n';
    }
    return out;
}

// Versioned (table, reference serialization) pairs for few-shot prompts.
struct SerializationExemplar {
    Table table;
    std::string serialization;
};

struct ExemplarAssets {
    std::string version;
    int exemplar_count = 2;
    std::vector<SerializationExemplar> exemplars;

    static ExemplarAssets load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw MissingExemplarAsset(path.string());
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw MissingExemplarAsset(path.string() + ": " + e.what());
        }
        ExemplarAssets assets;
        assets.version = doc.at("version").get<std::string>();
        assets.exemplar_count = doc.at("exemplar_count").get<int>();
        for (const auto& ex : doc.at("exemplars")) {
            assets.exemplars.push_back(
                {ex.at("table").get<Table>(), ex.at("serialization").get<std::string>()});
        }
        return assets;
    }
};

enum class PromptMode { zero_shot, few_shot };

// Byte-deterministic given (table, mode, asset version).
inline std::string build_serialization_prompt(const Table& table, PromptMode mode,
                                              const ExemplarAssets* assets = nullptr) {
    std::string prompt =
        "Convert the table into plain sentences. Write one sentence per data "
        "cell in the form \"The <row label> of <column header> is <value>.\"\n\n";

    if (mode == PromptMode::few_shot) {
        if (assets == nullptr || assets->exemplars.empty())
            throw MissingExemplarAsset("few-shot serialization needs an exemplar asset file");
        int k = std::min<int>(assets->exemplar_count,
                              static_cast<int>(assets->exemplars.size()));
        for (int i = 0; i < k; ++i) {
            prompt += "Table:\n" + render_table_pipes(assets->exemplars[i].table) +
                      "Sentences:\n" + assets->exemplars[i].serialization + "\n\n";
        }
    }
    prompt += "Table:\n" + render_table_pipes(table) + "Sentences:\n";
    return prompt;
}

// Sends the serialization prompt to a generator and tags the result with
// the mode. Client errors propagate, annotated with the table hash.
inline SerializedTable serialize_llm(const Table& table, GenClient& client, PromptMode mode,
                                     const GenParams& params,
                                     const ExemplarAssets* assets = nullptr) {
    std::string prompt = build_serialization_prompt(table, mode, assets);
    std::string text;
    try {
        text = client.generate(prompt, params);
    } catch (const GenerationError& e) {
        throw GenerationError("serializing table " + table_digest(table) + ": " + e.what());
    }
    return {text,
            mode == PromptMode::zero_shot ? SerializationMethod::llm_zero_shot
                                          : SerializationMethod::llm_few_shot,
            table_digest(table)};
}

}  // namespace finqa
