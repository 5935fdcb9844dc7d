#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "finqa/digest.hpp"
#include "finqa/errors.hpp"
#include "finqa/postprocess.hpp"
#include "finqa/program.hpp"

namespace finqa {

// ---- scalar metrics ----

inline constexpr double kDeviationCap = 100000.0;

// |pred - gold|, capped at 100K so a few runaway predictions cannot drown
// the mean.
inline double result_deviation(double pred, double gold) {
    return std::min(std::abs(pred - gold), kDeviationCap);
}

// Relative agreement within tol (default 10%). The epsilon floor keeps
// gold = 0 meaningful.
inline bool tolerance_match(double pred, double gold, double tol = 0.10) {
    return std::abs(pred - gold) <= tol * std::max(std::abs(gold), 1e-9);
}

// ---- component exact match ----

struct ComponentMatch {
    bool operator_em = false;
    bool arg1_em = false;
    bool arg2_em = false;
    bool stated_result_em = false;
    bool recomputed_result_em = false;
};

namespace detail {

inline bool operand_matches(const ParsedOperand& pred, const Operand& gold) {
    if (const auto* value = std::get_if<double>(&pred)) {
        if (const auto* gv = std::get_if<double>(&gold)) return std::abs(*value - *gv) <= 1e-6;
        return false;
    }
    if (const auto* ref = std::get_if<StepRef>(&pred)) {
        if (const auto* gr = std::get_if<StepRef>(&gold)) return ref->index == gr->index;
        return false;
    }
    return false;
}

}  // namespace detail

// Per-position comparison; defined only when step counts align (the caller
// routes everything else to the crosstab). Result EMs compare at four
// significant digits.
inline ComponentMatch exact_match(const ParsedAnswer& parsed, const StepProgram& gold,
                                  double gold_answer) {
    if (parsed.steps.size() != gold.steps.size())
        throw StepCountMismatch(parsed.steps.size(), gold.steps.size());

    ComponentMatch match;
    match.operator_em = true;
    match.arg1_em = true;
    match.arg2_em = true;
    for (std::size_t i = 0; i < gold.steps.size(); ++i) {
        const ParsedStep& p = parsed.steps[i];
        const Step& g = gold.steps[i];
        const auto* op = std::get_if<Operator>(&p.op);
        if (!op || *op != g.op) match.operator_em = false;
        if (!detail::operand_matches(p.arg1, g.arg1)) match.arg1_em = false;
        if (!detail::operand_matches(p.arg2, g.arg2)) match.arg2_em = false;
    }
    match.stated_result_em =
        parsed.stated_final && results_equal_4sig(*parsed.stated_final, gold_answer);
    match.recomputed_result_em =
        parsed.recomputed_final && results_equal_4sig(*parsed.recomputed_final, gold_answer);
    return match;
}

// Tags that need the gold program: extra steps, mismatched components on
// aligned answers, and final answers off by a unit-style factor.
inline void apply_gold_tags(ParsedAnswer& parsed, const StepProgram& gold,
                            std::optional<double> gold_answer) {
    if (parsed.steps.size() > gold.steps.size())
        parsed.tags.insert(DiscrepancyTag::imaginary_steps);
    if (parsed.steps.size() == gold.steps.size()) {
        for (std::size_t i = 0; i < gold.steps.size(); ++i) {
            const ParsedStep& p = parsed.steps[i];
            const auto* op = std::get_if<Operator>(&p.op);
            if (!op || *op != gold.steps[i].op)
                parsed.tags.insert(DiscrepancyTag::wrong_operator);
            if (!detail::operand_matches(p.arg1, gold.steps[i].arg1) ||
                !detail::operand_matches(p.arg2, gold.steps[i].arg2))
                parsed.tags.insert(DiscrepancyTag::wrong_operand);
        }
    }
    if (gold_answer && parsed.stated_final &&
        !tolerance_match(*parsed.stated_final, *gold_answer)) {
        for (double factor : {100.0, 1000.0, 1e6}) {
            if (tolerance_match(*parsed.stated_final / factor, *gold_answer) ||
                tolerance_match(*parsed.stated_final * factor, *gold_answer)) {
                parsed.tags.insert(DiscrepancyTag::unit_mismatch);
                break;
            }
        }
    }
}

// ---- ROUGE ----

struct RougeScores {
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double rougeLsum = 0.0;
};

namespace detail {

inline std::vector<std::string> rouge_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline double f1(double matches, double n_candidate, double n_reference) {
    if (n_candidate <= 0.0 || n_reference <= 0.0) return 0.0;
    double precision = matches / n_candidate;
    double recall = matches / n_reference;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

inline double rouge_n(const std::vector<std::string>& cand,
                      const std::vector<std::string>& ref, std::size_t n) {
    if (cand.size() < n || ref.size() < n) return 0.0;
    auto ngrams = [n](const std::vector<std::string>& tokens) {
        std::map<std::string, long> counts;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string key;
            for (std::size_t j = 0; j < n; ++j) {
                key += tokens[i + j];
                key += '\x1f';
            }
            ++counts[key];
        }
        return counts;
    };
    auto cand_counts = ngrams(cand);
    auto ref_counts = ngrams(ref);
    long matches = 0;
    for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches += std::min(count, it->second);
    }
    return f1(static_cast<double>(matches),
              static_cast<double>(cand.size() - n + 1),
              static_cast<double>(ref.size() - n + 1));
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                curr[j] = prev[j - 1] + 1;
            else
                curr[j] = std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

// Indices (into `ref`) of one longest common subsequence of ref and cand.
inline std::vector<std::size_t> lcs_ref_indices(const std::vector<std::string>& ref,
                                                const std::vector<std::string>& cand) {
    std::vector<std::vector<std::size_t>> table(ref.size() + 1,
                                                std::vector<std::size_t>(cand.size() + 1, 0));
    for (std::size_t i = 1; i <= ref.size(); ++i)
        for (std::size_t j = 1; j <= cand.size(); ++j)
            table[i][j] = ref[i - 1] == cand[j - 1]
                              ? table[i - 1][j - 1] + 1
                              : std::max(table[i - 1][j], table[i][j - 1]);
    std::vector<std::size_t> indices;
    std::size_t i = ref.size(), j = cand.size();
    while (i > 0 && j > 0) {
        if (ref[i - 1] == cand[j - 1]) {
            indices.push_back(i - 1);
            --i;
            --j;
        } else if (table[i - 1][j] >= table[i][j - 1]) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(indices.begin(), indices.end());
    return indices;
}

inline std::vector<std::vector<std::string>> split_sentences(const std::string& text) {
    std::vector<std::vector<std::string>> sentences;
    std::string current;
    auto flush = [&] {
        auto tokens = rouge_tokenize(current);
        if (!tokens.empty()) sentences.push_back(std::move(tokens));
        current.clear();
    };
    for (char c : text) {
        current.push_back(c);
        if (c == '\n' || c == '.' || c == '!' || c == '?') flush();
    }
    flush();
    return sentences;
}

// Summary-level LCS with the union convention: for each reference sentence,
// the union of its LCS hits against every candidate sentence, clipped by
// token frequency on both sides.
inline double rouge_l_sum(const std::string& candidate, const std::string& reference) {
    auto ref_sents = split_sentences(reference);
    auto cand_sents = split_sentences(candidate);
    if (ref_sents.empty() || cand_sents.empty()) return 0.0;

    std::map<std::string, long> cnt_r, cnt_c;
    std::size_t m = 0, n = 0;
    for (const auto& s : ref_sents)
        for (const auto& t : s) ++cnt_r[t], ++m;
    for (const auto& s : cand_sents)
        for (const auto& t : s) ++cnt_c[t], ++n;

    long hits = 0;
    for (const auto& r : ref_sents) {
        std::set<std::size_t> union_indices;
        for (const auto& c : cand_sents)
            for (auto idx : lcs_ref_indices(r, c)) union_indices.insert(idx);
        for (auto idx : union_indices) {
            const std::string& token = r[idx];
            if (cnt_c[token] > 0 && cnt_r[token] > 0) {
                ++hits;
                --cnt_c[token];
                --cnt_r[token];
            }
        }
    }
    return f1(static_cast<double>(hits), static_cast<double>(n), static_cast<double>(m));
}

}  // namespace detail

// ROUGE-1/2/L/Lsum F1. Tokenization: lowercase, split on non-alphanumerics.
// Empty candidate or reference scores zero everywhere; two empty (or
// identical) texts score one.
inline RougeScores rouge(const std::string& candidate, const std::string& reference) {
    auto cand = detail::rouge_tokenize(candidate);
    auto ref = detail::rouge_tokenize(reference);
    if (cand.empty() && ref.empty()) return {1.0, 1.0, 1.0, 1.0};
    if (cand.empty() || ref.empty()) return {0.0, 0.0, 0.0, 0.0};
    if (cand == ref) return {1.0, 1.0, 1.0, 1.0};

    RougeScores scores;
    scores.rouge1 = detail::rouge_n(cand, ref, 1);
    scores.rouge2 = detail::rouge_n(cand, ref, 2);
    scores.rougeL = detail::f1(static_cast<double>(detail::lcs_length(cand, ref)),
                               static_cast<double>(cand.size()),
                               static_cast<double>(ref.size()));
    scores.rougeLsum = detail::rouge_l_sum(candidate, reference);
    return scores;
}

// ---- step-count crosstab ----

// Buckets {1, 2, >2}; counts below one (failed parses) land in the first
// bucket.
inline int step_bucket(long steps) {
    if (steps <= 1) return 0;
    if (steps == 2) return 1;
    return 2;
}

struct Crosstab {
    // rows = gold bucket, columns = predicted bucket
    std::array<std::array<long, 3>, 3> cells{{{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}};

    long total() const {
        long t = 0;
        for (const auto& row : cells)
            for (long c : row) t += c;
        return t;
    }
    std::array<long, 3> row_sums() const {
        std::array<long, 3> sums{0, 0, 0};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) sums[static_cast<std::size_t>(r)] += cells[r][c];
        return sums;
    }
    std::array<long, 3> column_sums() const {
        std::array<long, 3> sums{0, 0, 0};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) sums[static_cast<std::size_t>(c)] += cells[r][c];
        return sums;
    }
};

struct StepCountPair {
    long predicted = 0;
    long gold = 0;
};

inline Crosstab step_crosstab(const std::vector<StepCountPair>& runs) {
    Crosstab tab;
    for (const auto& run : runs)
        ++tab.cells[static_cast<std::size_t>(step_bucket(run.gold))]
                   [static_cast<std::size_t>(step_bucket(run.predicted))];
    return tab;
}

// Fixed rendering, golden-file tested. Diagonal cells carry bold markers.
inline std::string render_crosstab(const Crosstab& tab) {
    static const char* labels[3] = {"1", "2", ">2"};
    std::string out = "| steps label vs steps generated | 1 | 2 | >2 |\n";
    out += "| --- | --- | --- | --- |\n";
    for (int r = 0; r < 3; ++r) {
        out += std::string("| ") + labels[r] + " |";
        for (int c = 0; c < 3; ++c) {
            std::string cell = std::to_string(tab.cells[static_cast<std::size_t>(r)]
                                                       [static_cast<std::size_t>(c)]);
            if (r == c) cell = "**" + cell + "**";
            out += " " + cell + " |";
        }
        out += '\n';
    }
    return out;
}

// ---- aggregation ----

// The metric-relevant slice of one pipeline run record.
struct RunRecord {
    std::string id;
    std::string raw_text;
    ParsedAnswer parsed;
    StepProgram gold_program;
    std::string gold_answer_raw;
    std::optional<double> gold_answer;
};

struct EvalReport {
    long n_examples = 0;
    long n_aligned = 0;  // predicted and gold step counts equal
    double operator_em_rate = 0.0;
    double arg1_em_rate = 0.0;
    double arg2_em_rate = 0.0;
    double stated_result_em_rate = 0.0;
    double recomputed_result_em_rate = 0.0;
    double mean_stated_deviation = 0.0;      // capped; missing counted at cap
    double mean_recomputed_deviation = 0.0;  // capped; missing counted at cap
    long n_missing_stated = 0;
    long n_missing_recomputed = 0;
    double stated_tolerance_accuracy = 0.0;      // at 10%
    double recomputed_tolerance_accuracy = 0.0;  // at 10%
    double mean_rouge_l = 0.0;  // raw model text vs canonical gold answer text
    Crosstab crosstab;
    std::map<DiscrepancyTag, long> tag_histogram;
    std::string config_digest;
    std::string transcript_digest;
};

inline EvalReport aggregate_report(const std::vector<RunRecord>& records,
                                   const std::string& config_digest,
                                   const std::string& transcript_digest) {
    if (records.empty()) throw EmptyRun();

    EvalReport report;
    report.n_examples = static_cast<long>(records.size());
    report.config_digest = config_digest;
    report.transcript_digest = transcript_digest;

    long op_hits = 0, arg1_hits = 0, arg2_hits = 0, stated_hits = 0, recomputed_hits = 0;
    long stated_tol = 0, recomputed_tol = 0;
    double stated_dev_sum = 0.0, recomputed_dev_sum = 0.0;
    double rouge_sum = 0.0;
    std::vector<StepCountPair> pairs;

    for (const auto& rec : records) {
        pairs.push_back({static_cast<long>(rec.parsed.steps.size()),
                         static_cast<long>(rec.gold_program.steps.size())});
        for (auto tag : rec.parsed.tags) ++report.tag_histogram[tag];

        double gold = rec.gold_answer.value_or(0.0);
        bool has_gold = rec.gold_answer.has_value();

        if (rec.parsed.steps.size() == rec.gold_program.steps.size() && has_gold) {
            ++report.n_aligned;
            auto match = exact_match(rec.parsed, rec.gold_program, gold);
            op_hits += match.operator_em;
            arg1_hits += match.arg1_em;
            arg2_hits += match.arg2_em;
            stated_hits += match.stated_result_em;
            recomputed_hits += match.recomputed_result_em;
        }

        if (has_gold) {
            if (rec.parsed.stated_final) {
                stated_dev_sum += result_deviation(*rec.parsed.stated_final, gold);
                stated_tol += tolerance_match(*rec.parsed.stated_final, gold);
            } else {
                stated_dev_sum += kDeviationCap;
                ++report.n_missing_stated;
            }
            if (rec.parsed.recomputed_final) {
                recomputed_dev_sum += result_deviation(*rec.parsed.recomputed_final, gold);
                recomputed_tol += tolerance_match(*rec.parsed.recomputed_final, gold);
            } else {
                recomputed_dev_sum += kDeviationCap;
                ++report.n_missing_recomputed;
            }
        }

        try {
            std::string gold_text = render_answer_text(rec.gold_program, rec.gold_answer);
            rouge_sum += rouge(rec.raw_text, gold_text).rougeL;
        } catch (const Error&) {
            // gold program that cannot execute contributes zero overlap
        }
    }

    report.crosstab = step_crosstab(pairs);
    const double n = static_cast<double>(report.n_examples);
    const double aligned = static_cast<double>(std::max<long>(report.n_aligned, 1));
    report.operator_em_rate = static_cast<double>(op_hits) / aligned;
    report.arg1_em_rate = static_cast<double>(arg1_hits) / aligned;
    report.arg2_em_rate = static_cast<double>(arg2_hits) / aligned;
    report.stated_result_em_rate = static_cast<double>(stated_hits) / aligned;
    report.recomputed_result_em_rate = static_cast<double>(recomputed_hits) / aligned;
    report.mean_stated_deviation = stated_dev_sum / n;
    report.mean_recomputed_deviation = recomputed_dev_sum / n;
    report.stated_tolerance_accuracy = static_cast<double>(stated_tol) / n;
    report.recomputed_tolerance_accuracy = static_cast<double>(recomputed_tol) / n;
    report.mean_rouge_l = rouge_sum / n;
    return report;
}

// ---- report renderings ----

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["n_examples"] = r.n_examples;
    j["n_aligned"] = r.n_aligned;
    j["operator_em_rate"] = r.operator_em_rate;
    j["arg1_em_rate"] = r.arg1_em_rate;
    j["arg2_em_rate"] = r.arg2_em_rate;
    j["stated_result_em_rate"] = r.stated_result_em_rate;
    j["recomputed_result_em_rate"] = r.recomputed_result_em_rate;
    j["mean_stated_deviation"] = r.mean_stated_deviation;
    j["mean_recomputed_deviation"] = r.mean_recomputed_deviation;
    j["n_missing_stated"] = r.n_missing_stated;
    j["n_missing_recomputed"] = r.n_missing_recomputed;
    j["stated_tolerance_accuracy"] = r.stated_tolerance_accuracy;
    j["recomputed_tolerance_accuracy"] = r.recomputed_tolerance_accuracy;
    j["mean_rouge_l"] = r.mean_rouge_l;
    j["crosstab"] = nlohmann::json::array();
    for (const auto& row : r.crosstab.cells) j["crosstab"].push_back(row);
    j["tag_histogram"] = nlohmann::json::object();
    for (const auto& [tag, count] : r.tag_histogram)
        j["tag_histogram"][std::string(discrepancy_tag_name(tag))] = count;
    j["config_digest"] = r.config_digest;
    j["transcript_digest"] = r.transcript_digest;
    return j;
}

namespace detail {

// charconv keeps renderings independent of the process locale
inline std::string fixed(double v, int precision) {
    char buf[64];
    auto [ptr, ec] =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string percent(double rate) { return fixed(rate * 100.0, 1) + "%"; }

inline std::string fixed3(double v) { return fixed(v, 3); }

}  // namespace detail

// Human-readable rendering; the tables mirror the crosstab, component
// accuracy, exact-match and deviation summaries.
inline std::string render_report(const EvalReport& r) {
    std::string out = "# Evaluation report\n\n";
    out += "examples: " + std::to_string(r.n_examples) +
           ", step-aligned: " + std::to_string(r.n_aligned) + "\n";
    out += "config digest: " + r.config_digest + "\n";
    out += "transcript digest: " + r.transcript_digest + "\n\n";

    out += "## Step counts (gold vs generated)\n\n";
    out += render_crosstab(r.crosstab);
    out += "\n";

    out += "## Numerical component accuracy (step-aligned examples)\n\n";
    out += "| component | accuracy |\n| --- | --- |\n";
    out += "| Numerical Operator | " + detail::percent(r.operator_em_rate) + " |\n";
    out += "| Argument 1 | " + detail::percent(r.arg1_em_rate) + " |\n";
    out += "| Argument 2 | " + detail::percent(r.arg2_em_rate) + " |\n";
    out += "| Result (w/o calculator) | " + detail::percent(r.stated_result_em_rate) + " |\n";
    out += "| Result (with calculator) | " + detail::percent(r.recomputed_result_em_rate) +
           " |\n\n";

    out += "## Exact match\n\n";
    out += "| Arg 1 - EM | Arg 2 - EM | Operator - EM | Result - EM (stated) | Result - EM "
           "(recomputed) |\n| --- | --- | --- | --- | --- |\n";
    out += "| " + detail::percent(r.arg1_em_rate) + " | " + detail::percent(r.arg2_em_rate) +
           " | " + detail::percent(r.operator_em_rate) + " | " +
           detail::percent(r.stated_result_em_rate) + " | " +
           detail::percent(r.recomputed_result_em_rate) + " |\n\n";

    out += "## Result deviation and text overlap\n\n";
    out += "| Result Deviation | Computed Result Deviation | RougeL Score | Tolerance "
           "accuracy (stated) | Tolerance accuracy (recomputed) |\n| --- | --- | --- | --- | "
           "--- |\n";
    out += "| " + detail::fixed3(r.mean_stated_deviation) + " | " +
           detail::fixed3(r.mean_recomputed_deviation) + " | " +
           detail::fixed3(r.mean_rouge_l) + " | " +
           detail::percent(r.stated_tolerance_accuracy) + " | " +
           detail::percent(r.recomputed_tolerance_accuracy) + " |\n\n";

    out += "## Discrepancy tags\n\n| tag | count |\n| --- | --- |\n";
    for (const auto& [tag, count] : r.tag_histogram)
        out += "| " + std::string(discrepancy_tag_name(tag)) + " | " + std::to_string(count) +
               " |\n";
    out += "\nmissing stated results: " + std::to_string(r.n_missing_stated) +
           ", missing recomputed results: " + std::to_string(r.n_missing_recomputed) + "\n";
    return out;
}

inline std::string report_digest(const EvalReport& r) {
    return digest_hex(report_to_json(r).dump());
}

}  // namespace finqa
