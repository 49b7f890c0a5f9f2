#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "celltrail/address.hpp"

namespace celltrail {

struct Expr;

struct NumExpr {
    double value = 0.0;
};

struct RefExpr {
    CellAddress address;
};

struct RangeExpr {
    CellRange range;
};

/// Call with a name from the supported set; fixed arities are enforced at
/// parse time.
struct FuncExpr {
    std::string name;  // uppercase
    std::vector<Expr> args;
};

enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct BinaryExpr {
    BinaryOp op;
    std::unique_ptr<Expr> left;
    std::unique_ptr<Expr> right;
};

struct NegExpr {
    std::unique_ptr<Expr> operand;
};

/// Parsed formula tree. Move-only; use clone() where a copy is needed.
struct Expr {
    std::variant<NumExpr, RefExpr, RangeExpr, FuncExpr, BinaryExpr, NegExpr> node;

    Expr clone() const;
};

bool expr_equal(const Expr& a, const Expr& b);

enum class ParseErrc { Syntax, UnknownFunction, Arity };

class FormulaParseError : public std::runtime_error {
public:
    FormulaParseError(ParseErrc code, std::size_t position, std::string message,
                      std::string name = {}, int got = 0, int want = 0)
        : std::runtime_error(std::move(message)),
          code_(code),
          position_(position),
          name_(std::move(name)),
          got_(got),
          want_(want) {}

    ParseErrc code() const { return code_; }
    std::size_t position() const { return position_; }   // byte offset into the source
    const std::string& name() const { return name_; }    // function name, if relevant
    int got() const { return got_; }
    int want() const { return want_; }

private:
    ParseErrc code_;
    std::size_t position_;
    std::string name_;
    int got_, want_;
};

/// Parses "=<expr>". Function names are case-insensitive and normalized to
/// uppercase; ';' and ',' are both accepted as argument separators, mixed
/// freely.
Expr parse_formula(std::string_view text);

/// Renders back to "=<expr>" with minimal parentheses, preserving structure:
/// parse_formula(print_formula(e, s)) is structurally equal to e for any tree
/// in parser-canonical form. `separator` is ';' or ','.
std::string print_formula(const Expr& expr, char separator = ',');

}  // namespace celltrail
