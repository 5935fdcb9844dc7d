#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "finqa/errors.hpp"
#include "finqa/numeral.hpp"

namespace finqa {

// The arithmetic step-program DSL:
//   subtract(5829, 5735), divide(#0, 5735)
// Every operator is binary; #k is a 0-based reference to an earlier step.

enum class Operator { add, subtract, multiply, divide, max, min };

inline constexpr std::array<std::string_view, 6> kOperatorNames = {
    "add", "subtract", "multiply", "divide", "max", "min"};

inline std::string_view operator_name(Operator op) {
    return kOperatorNames[static_cast<std::size_t>(op)];
}

inline std::optional<Operator> operator_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kOperatorNames.size(); ++i)
        if (kOperatorNames[i] == name) return static_cast<Operator>(i);
    return std::nullopt;
}

struct StepRef {
    int index = 0;  // 0-based: #0 is the first step
    bool operator==(const StepRef&) const = default;
};

using Operand = std::variant<double, StepRef>;

struct Step {
    Operator op;
    Operand arg1;
    Operand arg2;
    bool operator==(const Step&) const = default;
};

struct StepProgram {
    std::vector<Step> steps;
    bool operator==(const StepProgram&) const = default;
};

// Throws ForwardReference if any operand points at itself or a later step.
inline void validate_program(const StepProgram& program) {
    for (std::size_t i = 0; i < program.steps.size(); ++i) {
        for (const Operand* arg : {&program.steps[i].arg1, &program.steps[i].arg2}) {
            if (const auto* ref = std::get_if<StepRef>(arg)) {
                if (ref->index < 0 || static_cast<std::size_t>(ref->index) >= i)
                    throw ForwardReference(ref->index, i);
            }
        }
    }
}

namespace detail {

class ProgramScanner {
public:
    explicit ProgramScanner(std::string_view text) : text_(text) {}

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool at_end() {
        skip_ws();
        return pos_ >= text_.size();
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void expect(char c, const char* what) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != c) throw ParseError(pos_, what);
        ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string identifier() {
        skip_ws();
        std::size_t start = pos_;
        if (pos_ < text_.size() && (std::isalpha(static_cast<unsigned char>(text_[pos_])) ||
                                    text_[pos_] == '_'))
            ++pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                       text_[pos_] == '_'))
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    std::string digits() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
        return std::string(text_.substr(start, pos_ - start));
    }

    // Scans one argument token up to the next ',' or ')'. Thousands-separator
    // commas ("5,829") are kept with the token; argument-separating commas
    // are not.
    std::string argument_token() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == ')') break;
            if (c == ',') {
                bool digit_before = pos_ > start &&
                                    std::isdigit(static_cast<unsigned char>(text_[pos_ - 1]));
                bool group_of_three =
                    pos_ + 3 < text_.size() &&
                    std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) &&
                    std::isdigit(static_cast<unsigned char>(text_[pos_ + 2])) &&
                    std::isdigit(static_cast<unsigned char>(text_[pos_ + 3])) &&
                    (pos_ + 4 >= text_.size() ||
                     !std::isdigit(static_cast<unsigned char>(text_[pos_ + 4])));
                if (digit_before && group_of_three) {
                    pos_ += 4;
                    continue;
                }
                break;
            }
            ++pos_;
        }
        std::string_view tok = text_.substr(start, pos_ - start);
        while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.back())))
            tok.remove_suffix(1);
        return std::string(tok);
    }

    std::size_t pos() const { return pos_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Parses `op(a, b)[, op(a, b)]*`. Arguments are numerals (commas, leading
// currency symbol, trailing % accepted) or `#k` step references. Throws
// ParseError, UnsupportedOperator, or ForwardReference.
inline StepProgram parse_program(std::string_view text) {
    detail::ProgramScanner scan(text);
    StepProgram program;

    while (true) {
        scan.skip_ws();
        std::size_t step_index = program.steps.size();
        std::string name = scan.identifier();
        if (name.empty()) throw ParseError(scan.pos(), "operator name");
        auto op = operator_from_name(name);
        if (!op) throw UnsupportedOperator(name);
        scan.expect('(', "'('");

        auto parse_arg = [&](const char* which) -> Operand {
            scan.skip_ws();
            if (scan.consume('#')) {
                std::size_t digit_pos = scan.pos();
                std::string digits = scan.digits();
                if (digits.empty() || digits.size() > 9)
                    throw ParseError(digit_pos, "step number after '#'");
                int ref = std::stoi(digits);
                if (static_cast<std::size_t>(ref) >= step_index)
                    throw ForwardReference(ref, step_index);
                return StepRef{ref};
            }
            std::size_t tok_pos = scan.pos();
            std::string token = scan.argument_token();
            if (token.empty()) throw ParseError(tok_pos, which);
            // Identifier-shaped arguments (const_100, table row names) belong
            // to the out-of-scope operator set.
            if (std::isalpha(static_cast<unsigned char>(token.front())) ||
                token.front() == '_')
                throw UnsupportedOperator(token);
            auto value = try_normalize_numeral(token);
            if (!value) throw ParseError(tok_pos, "numeral or #k reference");
            return *value;
        };

        Step step;
        step.op = *op;
        step.arg1 = parse_arg("first argument");
        scan.expect(',', "','");
        step.arg2 = parse_arg("second argument");
        scan.expect(')', "')'");
        program.steps.push_back(step);

        if (!scan.consume(',')) break;
    }
    if (!scan.at_end()) throw ParseError(scan.pos(), "end of program");
    return program;
}

// Evaluates every step in order and returns all step values.
// Double-precision arithmetic; throws DivisionByZero / NonFiniteResult.
inline std::vector<double> execute_steps(const StepProgram& program) {
    if (program.steps.empty()) throw ParseError(0, "non-empty program");
    validate_program(program);
    std::vector<double> values;
    values.reserve(program.steps.size());
    for (std::size_t i = 0; i < program.steps.size(); ++i) {
        const Step& step = program.steps[i];
        auto resolve = [&](const Operand& arg) {
            if (const auto* ref = std::get_if<StepRef>(&arg))
                return values[static_cast<std::size_t>(ref->index)];
            return std::get<double>(arg);
        };
        double a = resolve(step.arg1);
        double b = resolve(step.arg2);
        double v = 0.0;
        switch (step.op) {
            case Operator::add: v = a + b; break;
            case Operator::subtract: v = a - b; break;
            case Operator::multiply: v = a * b; break;
            case Operator::divide:
                if (b == 0.0) throw DivisionByZero(i);
                v = a / b;
                break;
            case Operator::max: v = std::max(a, b); break;
            case Operator::min: v = std::min(a, b); break;
        }
        if (!std::isfinite(v)) throw NonFiniteResult(i);
        values.push_back(v);
    }
    return values;
}

// The calculator: the final answer is the last step's value.
inline double execute(const StepProgram& program) { return execute_steps(program).back(); }

// Number of significant digits used when a program result is rendered as text.
inline constexpr int kResultTextDigits = 6;

inline std::string format_result(double value) {
    return format_significant(value, kResultTextDigits);
}

inline std::string format_operand(const Operand& arg) {
    if (const auto* ref = std::get_if<StepRef>(&arg)) return "#" + std::to_string(ref->index);
    return format_number(std::get<double>(arg));
}

// Canonical text form: lowercase operators, ", " separators, shortest
// round-trip numerals. parse_program(format_program(p)) == p.
inline std::string format_program(const StepProgram& program) {
    std::string out;
    for (std::size_t i = 0; i < program.steps.size(); ++i) {
        const Step& step = program.steps[i];
        if (i > 0) out += ", ";
        out += operator_name(step.op);
        out += '(';
        out += format_operand(step.arg1);
        out += ", ";
        out += format_operand(step.arg2);
        out += ')';
    }
    return out;
}

}  // namespace finqa
