#pragma once

#include <optional>
#include <regex>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "finqa/numeral.hpp"
#include "finqa/program.hpp"

namespace finqa {

enum class DiscrepancyTag {
    imaginary_steps,
    wrong_operand,
    wrong_operator,
    arithmetic_error,
    unparseable_format,
    unit_mismatch,
};

inline std::string_view discrepancy_tag_name(DiscrepancyTag tag) {
    switch (tag) {
        case DiscrepancyTag::imaginary_steps: return "imaginary_steps";
        case DiscrepancyTag::wrong_operand: return "wrong_operand";
        case DiscrepancyTag::wrong_operator: return "wrong_operator";
        case DiscrepancyTag::arithmetic_error: return "arithmetic_error";
        case DiscrepancyTag::unparseable_format: return "unparseable_format";
        case DiscrepancyTag::unit_mismatch: return "unit_mismatch";
    }
    return "unknown";
}

enum class ParseStatus { clean, partial, failed };

inline std::string_view parse_status_name(ParseStatus s) {
    switch (s) {
        case ParseStatus::clean: return "clean";
        case ParseStatus::partial: return "partial";
        case ParseStatus::failed: return "failed";
    }
    return "unknown";
}

// An operand as extracted from free text: a normalized number, a step
// reference, or the raw token when it is neither.
using ParsedOperand = std::variant<double, StepRef, std::string>;

struct ParsedStep {
    std::variant<Operator, std::string> op;  // raw string when unrecognized
    ParsedOperand arg1;
    ParsedOperand arg2;
    std::optional<double> stated_result;  // the "= r" the model wrote, if any
};

struct ParsedAnswer {
    std::vector<ParsedStep> steps;
    std::optional<double> stated_final;     // from the "Answer:" line
    std::optional<double> recomputed_final; // set by recompute()
    ParseStatus parse_status = ParseStatus::failed;
    std::set<DiscrepancyTag> tags;
};

namespace detail {

inline std::optional<Operator> operator_from_synonym(std::string word) {
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (auto op = operator_from_name(word)) return op;
    if (word == "plus") return Operator::add;
    if (word == "minus") return Operator::subtract;
    if (word == "times" || word == "multiplied") return Operator::multiply;
    if (word == "divided" || word == "over") return Operator::divide;
    if (word == "maximum") return Operator::max;
    if (word == "minimum") return Operator::min;
    return std::nullopt;
}

inline std::optional<Operator> operator_from_symbol(char c) {
    switch (c) {
        case '+': return Operator::add;
        case '-': return Operator::subtract;
        case '*': case 'x': return Operator::multiply;
        case '/': return Operator::divide;
    }
    return std::nullopt;
}

inline ParsedOperand parse_operand_token(const std::string& token) {
    // ref index bounded to 9 digits so stoi cannot overflow on junk
    static const std::regex ref_re(R"(^\s*#\s*(\d{1,9})\s*$)");
    std::smatch m;
    if (std::regex_match(token, m, ref_re)) return StepRef{std::stoi(m[1].str())};
    if (auto value = try_normalize_numeral(token)) return *value;
    return token;
}

// Parses one step body like "divide(100, 50)" / "100 divided by 50" /
// "100 / 50". Returns nullopt when the text has no recognizable shape.
inline std::optional<ParsedStep> parse_step_body(const std::string& body) {
    static const std::regex call_re(R"(^\s*([A-Za-z_][A-Za-z_]*)\s*\((.*)\)\s*$)");
    static const std::regex word_infix_re(
        R"(^\s*(.+?)\s+(plus|minus|times|divided\s+by|multiplied\s+by|over|max|min)\s+(.+?)\s*$)",
        std::regex::icase);
    static const std::regex sym_infix_re(R"(^\s*(\S+)\s*([+\-*/x])\s*(\S+)\s*$)");

    std::smatch m;
    if (std::regex_match(body, m, call_re)) {
        std::string name = m[1].str();
        std::string args = m[2].str();
        // Split the two arguments with the program scanner's comma logic so
        // thousands separators survive ("divide(1,234, 5)").
        ProgramScanner scan(args);
        std::string tok1 = scan.argument_token();
        if (!scan.consume(',')) return std::nullopt;
        std::string tok2 = scan.argument_token();
        if (!scan.at_end() || tok1.empty() || tok2.empty()) return std::nullopt;
        ParsedStep step;
        if (auto op = operator_from_synonym(name))
            step.op = *op;
        else
            step.op = name;
        step.arg1 = parse_operand_token(tok1);
        step.arg2 = parse_operand_token(tok2);
        return step;
    }
    if (std::regex_match(body, m, word_infix_re)) {
        std::string word = m[2].str();
        std::string head;
        for (char c : word) {
            if (std::isspace(static_cast<unsigned char>(c))) break;
            head.push_back(c);
        }
        if (auto op = operator_from_synonym(head)) {
            ParsedStep step;
            step.op = *op;
            step.arg1 = parse_operand_token(m[1].str());
            step.arg2 = parse_operand_token(m[3].str());
            return step;
        }
    }
    if (std::regex_match(body, m, sym_infix_re)) {
        if (auto op = operator_from_symbol(m[2].str()[0])) {
            ParsedStep step;
            step.op = *op;
            step.arg1 = parse_operand_token(m[1].str());
            step.arg2 = parse_operand_token(m[3].str());
            return step;
        }
    }
    return std::nullopt;
}

}  // namespace detail

// Total over all strings: every answer text yields a ParsedAnswer; failures
// are encoded in parse_status, never thrown.
inline ParsedAnswer extract_steps(const std::string& answer_text) {
    static const std::regex step_line_re(R"(^\s*step\s+(\d+)\s*[:.\-]?\s*(.*?)\s*$)",
                                         std::regex::icase);
    static const std::regex answer_line_re(
        R"(^\s*(?:the\s+)?(?:final\s+)?answer\s*(?:is\b|[:=])\s*(.+?)\s*\.?\s*$)",
        std::regex::icase);

    ParsedAnswer parsed;
    std::size_t pos = 0;
    while (pos <= answer_text.size()) {
        std::size_t eol = answer_text.find('\n', pos);
        std::string line = answer_text.substr(
            pos, eol == std::string::npos ? std::string::npos : eol - pos);
        pos = eol == std::string::npos ? answer_text.size() + 1 : eol + 1;

        std::smatch m;
        if (std::regex_match(line, m, step_line_re)) {
            std::string body = m[2].str();

            // Peel a trailing "= r" when r is a numeral.
            std::optional<double> stated;
            std::size_t eq = body.rfind('=');
            if (eq != std::string::npos) {
                if (auto value = try_normalize_numeral(body.substr(eq + 1))) {
                    stated = value;
                    body = body.substr(0, eq);
                    while (!body.empty() &&
                           std::isspace(static_cast<unsigned char>(body.back())))
                        body.pop_back();
                }
            }

            if (auto step = detail::parse_step_body(body)) {
                step->stated_result = stated;
                parsed.steps.push_back(std::move(*step));
            } else {
                ParsedStep raw;
                raw.op = body;
                raw.arg1 = std::string();
                raw.arg2 = std::string();
                raw.stated_result = stated;
                parsed.steps.push_back(std::move(raw));
            }
            continue;
        }
        if (std::regex_match(line, m, answer_line_re)) {
            if (auto value = try_normalize_numeral(m[1].str())) parsed.stated_final = value;
            continue;
        }
        // anything else is prose; ignored
    }

    bool all_steps_clean = !parsed.steps.empty();
    for (const auto& step : parsed.steps) {
        if (!std::holds_alternative<Operator>(step.op)) all_steps_clean = false;
        for (const ParsedOperand* arg : {&step.arg1, &step.arg2})
            if (std::holds_alternative<std::string>(*arg)) all_steps_clean = false;
    }

    if (all_steps_clean && parsed.stated_final.has_value()) {
        parsed.parse_status = ParseStatus::clean;
    } else if (parsed.steps.empty() && !parsed.stated_final.has_value()) {
        parsed.parse_status = ParseStatus::failed;
    } else {
        parsed.parse_status = ParseStatus::partial;
    }
    if (parsed.parse_status != ParseStatus::clean)
        parsed.tags.insert(DiscrepancyTag::unparseable_format);
    return parsed;
}

// The extracted steps as a StepProgram, when they form a valid one
// (recognized operators, numeric or reference args, references to earlier
// steps only).
inline std::optional<StepProgram> steps_as_program(const ParsedAnswer& parsed) {
    if (parsed.steps.empty()) return std::nullopt;
    StepProgram program;
    for (std::size_t i = 0; i < parsed.steps.size(); ++i) {
        const ParsedStep& step = parsed.steps[i];
        const auto* op = std::get_if<Operator>(&step.op);
        if (!op) return std::nullopt;
        Step out;
        out.op = *op;
        auto convert = [&](const ParsedOperand& arg) -> std::optional<Operand> {
            if (const auto* v = std::get_if<double>(&arg)) return Operand{*v};
            if (const auto* ref = std::get_if<StepRef>(&arg)) {
                if (ref->index < 0 || static_cast<std::size_t>(ref->index) >= i)
                    return std::nullopt;
                return Operand{*ref};
            }
            return std::nullopt;
        };
        auto a1 = convert(step.arg1);
        auto a2 = convert(step.arg2);
        if (!a1 || !a2) return std::nullopt;
        out.arg1 = *a1;
        out.arg2 = *a2;
        program.steps.push_back(out);
    }
    return program;
}

// Two results are "the same number as written" when they agree at four
// significant digits.
inline bool results_equal_4sig(double a, double b) {
    return format_significant(a, 4) == format_significant(b, 4);
}

// Re-executes the extracted steps with the calculator. Stated values are
// never overwritten; both survive for with/without-calculator metrics.
// Idempotent.
inline ParsedAnswer recompute(ParsedAnswer parsed) {
    parsed.recomputed_final.reset();
    if (auto program = steps_as_program(parsed)) {
        try {
            parsed.recomputed_final = execute(*program);
        } catch (const DivisionByZero&) {
            parsed.tags.insert(DiscrepancyTag::arithmetic_error);
        } catch (const NonFiniteResult&) {
            parsed.tags.insert(DiscrepancyTag::arithmetic_error);
        }
    }
    // A model that shows correct steps but states a different number made an
    // arithmetic slip; that is exactly what re-execution is for.
    if (parsed.recomputed_final && parsed.stated_final &&
        !results_equal_4sig(*parsed.recomputed_final, *parsed.stated_final))
        parsed.tags.insert(DiscrepancyTag::arithmetic_error);
    return parsed;
}

// Canonical answer text: the grammar the QA prompt instructs the model to
// follow and extract_steps parses back.
//   Step 1: subtract(5829, 5735) = 94
//   Answer: 94
inline std::string render_answer_text(const StepProgram& program,
                                      std::optional<double> final_value = std::nullopt) {
    auto values = execute_steps(program);
    std::string out;
    for (std::size_t i = 0; i < program.steps.size(); ++i) {
        const Step& step = program.steps[i];
        out += "Step " + std::to_string(i + 1) + ": ";
        out += operator_name(step.op);
        out += '(';
        out += format_operand(step.arg1);
        out += ", ";
        out += format_operand(step.arg2);
        out += ") = " + format_result(values[i]) + "\n";
    }
    out += "Answer: " + format_result(final_value.value_or(values.back()));
    return out;
}

}  // namespace finqa
