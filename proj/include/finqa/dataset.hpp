#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "finqa/errors.hpp"
#include "finqa/numeral.hpp"
#include "finqa/program.hpp"

namespace finqa {

using Table = std::vector<std::vector<std::string>>;

// One dataset record. Table convention: row 0 holds column headers,
// column 0 holds row labels; this is asserted at load time, not inferred.
struct FinQAExample {
    std::string id;
    std::string question;
    std::vector<std::string> pre_text;
    std::vector<std::string> post_text;
    Table table;
    std::string gold_program_text;        // source DSL text as found in the file
    StepProgram gold_program;             // parsed step-wise form
    std::string gold_answer_raw;          // original form, e.g. "14.1%"
    std::optional<double> gold_answer;    // normalized numeric value when parseable
};

enum class SkipReason {
    missing_field,
    malformed_field,
    empty_id,
    duplicate_id,
    empty_table,
    ragged_table,
    unsupported_operator,
    program_parse_error,
};

inline std::string_view skip_reason_name(SkipReason reason) {
    switch (reason) {
        case SkipReason::missing_field: return "missing field";
        case SkipReason::malformed_field: return "malformed field";
        case SkipReason::empty_id: return "empty id";
        case SkipReason::duplicate_id: return "duplicate id";
        case SkipReason::empty_table: return "empty table";
        case SkipReason::ragged_table: return "ragged table";
        case SkipReason::unsupported_operator: return "unsupported operator";
        case SkipReason::program_parse_error: return "parse error";
    }
    return "unknown";
}

struct SkippedRecord {
    std::string id;
    SkipReason reason;
    std::string detail;
};

struct DatasetSplit {
    std::string name;  // train | validation | test
    std::vector<FinQAExample> examples;
    std::vector<SkippedRecord> skipped;
};

// Parses a gold program into the step-wise structure. Steps are implicitly
// numbered from 1 in source order. Throws UnsupportedOperator / ParseError.
inline StepProgram preprocess_gold(const std::string& gold_program) {
    return parse_program(gold_program);
}

namespace detail {

struct RecordOutcome {
    std::optional<FinQAExample> example;
    std::optional<SkippedRecord> skipped;
};

inline RecordOutcome validate_record(const nlohmann::json& rec, std::size_t position) {
    auto skip = [&](SkipReason reason, std::string detail) {
        std::string id = rec.is_object() && rec.contains("id") && rec["id"].is_string()
                             ? rec["id"].get<std::string>()
                             : "<record " + std::to_string(position) + ">";
        return RecordOutcome{std::nullopt, SkippedRecord{id, reason, std::move(detail)}};
    };

    if (!rec.is_object()) return skip(SkipReason::malformed_field, "record is not an object");
    for (const char* field : {"id", "pre_text", "post_text", "table", "qa"}) {
        if (!rec.contains(field)) return skip(SkipReason::missing_field, field);
    }
    if (!rec["id"].is_string()) return skip(SkipReason::malformed_field, "id");
    const auto& qa = rec["qa"];
    if (!qa.is_object()) return skip(SkipReason::malformed_field, "qa");
    for (const char* field : {"question", "program", "exe_ans"}) {
        if (!qa.contains(field)) return skip(SkipReason::missing_field, std::string("qa.") + field);
    }

    FinQAExample ex;
    ex.id = rec["id"].get<std::string>();
    if (ex.id.empty()) return skip(SkipReason::empty_id, "");

    auto read_sentences = [&](const char* field,
                              std::vector<std::string>& out) -> bool {
        const auto& arr = rec[field];
        if (!arr.is_array()) return false;
        for (const auto& s : arr) {
            if (!s.is_string()) return false;
            out.push_back(s.get<std::string>());
        }
        return true;
    };
    if (!read_sentences("pre_text", ex.pre_text))
        return skip(SkipReason::malformed_field, "pre_text");
    if (!read_sentences("post_text", ex.post_text))
        return skip(SkipReason::malformed_field, "post_text");

    const auto& table = rec["table"];
    if (!table.is_array()) return skip(SkipReason::malformed_field, "table");
    if (table.empty()) return skip(SkipReason::empty_table, "");
    std::set<std::size_t> row_lengths;
    for (const auto& row : table) {
        if (!row.is_array()) return skip(SkipReason::malformed_field, "table row");
        std::vector<std::string> cells;
        for (const auto& cell : row) {
            if (cell.is_string())
                cells.push_back(cell.get<std::string>());
            else if (cell.is_number())
                cells.push_back(cell.dump());
            else
                return skip(SkipReason::malformed_field, "table cell");
        }
        row_lengths.insert(cells.size());
        ex.table.push_back(std::move(cells));
    }
    if (row_lengths.size() != 1 || *row_lengths.begin() < 2) {
        std::string detail = "row lengths {";
        for (auto len : row_lengths) detail += std::to_string(len) + ",";
        detail.back() = '}';
        return skip(SkipReason::ragged_table, detail);
    }

    if (!qa["question"].is_string()) return skip(SkipReason::malformed_field, "qa.question");
    ex.question = qa["question"].get<std::string>();
    if (!qa["program"].is_string()) return skip(SkipReason::malformed_field, "qa.program");
    ex.gold_program_text = qa["program"].get<std::string>();

    try {
        ex.gold_program = preprocess_gold(ex.gold_program_text);
    } catch (const UnsupportedOperator& e) {
        return skip(SkipReason::unsupported_operator, e.token);
    } catch (const ForwardReference& e) {
        return skip(SkipReason::program_parse_error, e.what());
    } catch (const ParseError& e) {
        return skip(SkipReason::program_parse_error, e.what());
    }

    const auto& ans = qa["exe_ans"];
    if (ans.is_number()) {
        ex.gold_answer = ans.get<double>();
        ex.gold_answer_raw = format_number(*ex.gold_answer);
    } else if (ans.is_string()) {
        ex.gold_answer_raw = ans.get<std::string>();
        ex.gold_answer = try_normalize_numeral(ex.gold_answer_raw);
    } else {
        return skip(SkipReason::malformed_field, "qa.exe_ans");
    }

    return RecordOutcome{std::move(ex), std::nullopt};
}

}  // namespace detail

// Loads a file holding an array of records in the public FinQA field layout.
// Every record either becomes a validated example or lands in `skipped` with
// a reason; per-record problems never abort the load.
inline DatasetSplit load_dataset(const std::filesystem::path& path,
                                 const std::string& split_name) {
    if (split_name != "train" && split_name != "validation" && split_name != "test")
        throw ConfigError("split name must be train, validation or test, got \"" +
                          split_name + "\"");
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string());

    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile(path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw MalformedFile(path.string() + ": expected an array of records");

    DatasetSplit split;
    split.name = split_name;
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        auto outcome = detail::validate_record(doc[i], i);
        if (outcome.example) {
            if (!seen_ids.insert(outcome.example->id).second) {
                split.skipped.push_back({outcome.example->id, SkipReason::duplicate_id, ""});
                continue;
            }
            split.examples.push_back(std::move(*outcome.example));
        } else {
            split.skipped.push_back(std::move(*outcome.skipped));
        }
    }
    return split;
}

// ---- the artifact's own normalized layout: one JSON record per line ----

inline nlohmann::json example_to_json(const FinQAExample& ex) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["question"] = ex.question;
    j["pre_text"] = ex.pre_text;
    j["post_text"] = ex.post_text;
    j["table"] = ex.table;
    j["program"] = format_program(ex.gold_program);
    j["answer_raw"] = ex.gold_answer_raw;
    if (ex.gold_answer)
        j["answer"] = *ex.gold_answer;
    else
        j["answer"] = nullptr;
    return j;
}

inline FinQAExample example_from_json(const nlohmann::json& j) {
    FinQAExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.question = j.at("question").get<std::string>();
    ex.pre_text = j.at("pre_text").get<std::vector<std::string>>();
    ex.post_text = j.at("post_text").get<std::vector<std::string>>();
    ex.table = j.at("table").get<Table>();
    ex.gold_program_text = j.at("program").get<std::string>();
    ex.gold_program = parse_program(ex.gold_program_text);
    ex.gold_answer_raw = j.at("answer_raw").get<std::string>();
    if (j.at("answer").is_number()) ex.gold_answer = j["answer"].get<double>();
    return ex;
}

inline void write_normalized(const DatasetSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FileNotFound(path.string());
    for (const auto& ex : split.examples) out << example_to_json(ex).dump() << '\n';
}

inline DatasetSplit load_normalized(const std::filesystem::path& path,
                                    const std::string& split_name) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string());
    DatasetSplit split;
    split.name = split_name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            split.examples.push_back(example_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw MalformedFile(path.string() + " line " + std::to_string(line_no) + ": " +
                                e.what());
        }
    }
    return split;
}

// Reads either the public FinQA array layout or the normalized line layout,
// sniffing on the first non-whitespace byte.
inline DatasetSplit load_any_dataset(const std::filesystem::path& path,
                                     const std::string& split_name) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path.string());
    char c;
    while (in.get(c) && std::isspace(static_cast<unsigned char>(c))) {
    }
    if (!in) throw MalformedFile(path.string() + ": empty file");
    return c == '[' ? load_dataset(path, split_name) : load_normalized(path, split_name);
}

}  // namespace finqa
