#include "celltrail/formula.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "celltrail/numbers.hpp"

namespace celltrail {

namespace {

struct FuncSig {
    const char* name;
    int min_arity;
    int max_arity;  // -1 = variadic
};

constexpr FuncSig kFunctions[] = {
    {"SIN", 1, 1},     {"COS", 1, 1}, {"EXP", 1, 1},      {"MAX", 1, -1}, {"MIN", 1, -1},
    {"INDEX", 3, 3},   {"OFFSET", 5, 5}, {"MINVERSE", 1, 1}, {"SUM", 1, -1},
};

const FuncSig* find_function(const std::string& name) {
    for (const auto& f : kFunctions)
        if (name == f.name) return &f;
    return nullptr;
}

class FormulaParser {
public:
    explicit FormulaParser(std::string_view text) : text_(text) {}

    Expr run() {
        if (text_.empty() || text_[0] != '=')
            fail(0, "formula must begin with '='");
        pos_ = 1;
        Expr e = parse_expr();
        skip_ws();
        if (pos_ != text_.size()) fail(pos_, "unexpected trailing input");
        return e;
    }

private:
    [[noreturn]] void fail(std::size_t at, const std::string& expected) {
        throw FormulaParseError(ParseErrc::Syntax, at,
                                "syntax error at position " + std::to_string(at) + ": " +
                                    expected);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    bool accept(char c) {
        skip_ws();
        if (!eof() && peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr parse_expr() {
        Expr left = parse_term();
        for (;;) {
            skip_ws();
            if (accept('+'))
                left = make_binary(BinaryOp::Add, std::move(left), parse_term());
            else if (accept('-'))
                left = make_binary(BinaryOp::Sub, std::move(left), parse_term());
            else
                return left;
        }
    }

    Expr parse_term() {
        Expr left = parse_pow();
        for (;;) {
            skip_ws();
            if (accept('*'))
                left = make_binary(BinaryOp::Mul, std::move(left), parse_pow());
            else if (accept('/'))
                left = make_binary(BinaryOp::Div, std::move(left), parse_pow());
            else
                return left;
        }
    }

    // pow := unary ("^" pow)?   -- right-associative
    Expr parse_pow() {
        Expr base = parse_unary();
        skip_ws();
        if (accept('^')) return make_binary(BinaryOp::Pow, std::move(base), parse_pow());
        return base;
    }

    Expr parse_unary() {
        skip_ws();
        if (accept('-')) {
            Expr operand = parse_unary();
            Expr e;
            e.node = NegExpr{std::make_unique<Expr>(std::move(operand))};
            return e;
        }
        return parse_primary();
    }

    Expr parse_primary() {
        skip_ws();
        if (eof()) fail(pos_, "expected a value");
        const char c = peek();
        if (c == '(') {
            ++pos_;
            Expr inner = parse_expr();
            if (!accept(')')) fail(pos_, "expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number_lit();
        if (c == '$' || std::isalpha(static_cast<unsigned char>(c))) return parse_ref_or_call();
        fail(pos_, "expected number, reference or function call");
    }

    Expr parse_number_lit() {
        double v = 0.0;
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        const auto res = std::from_chars(begin, end, v);
        if (res.ec != std::errc() || !std::isfinite(v)) fail(pos_, "bad number literal");
        pos_ += static_cast<std::size_t>(res.ptr - begin);
        Expr e;
        e.node = NumExpr{v};
        return e;
    }

    // Shared entry for cell refs, ranges and function calls. A '$' or a
    // letters+digits shape is a reference; letters followed by '(' is a call.
    Expr parse_ref_or_call() {
        const std::size_t start = pos_;
        bool col_abs = false;
        if (peek() == '$') {
            col_abs = true;
            ++pos_;
        }
        std::string letters;
        while (!eof() && std::isalpha(static_cast<unsigned char>(peek())))
            letters.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(text_[pos_++]))));
        if (letters.empty()) fail(pos_, "expected column letters or function name");

        // A '(' (possibly after spaces) makes this a call; otherwise rewind
        // and read the row part with no interior whitespace.
        const std::size_t after_letters = pos_;
        skip_ws();
        if (!col_abs && !eof() && peek() == '(') return parse_call(letters, start);
        pos_ = after_letters;

        // Reference: optional '$' then row digits.
        bool row_abs = false;
        if (!eof() && peek() == '$') {
            row_abs = true;
            ++pos_;
        }
        if (eof() || !std::isdigit(static_cast<unsigned char>(peek())))
            fail(pos_, "expected row number after column letters");
        long long row = 0;
        while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
            row = row * 10 + (text_[pos_++] - '0');
            if (row > 100'000'000) fail(start, "row number out of range");
        }
        const auto col = parse_column_letters(letters);
        if (!col || row < 1) fail(start, "bad cell reference");
        const CellAddress first{*col, static_cast<int>(row), col_abs, row_abs};

        skip_ws();
        if (!eof() && peek() == ':') {
            ++pos_;
            skip_ws();
            const CellAddress second = parse_plain_ref();
            Expr e;
            e.node = RangeExpr{normalize_range(first, second)};
            return e;
        }
        Expr e;
        e.node = RefExpr{first};
        return e;
    }

    CellAddress parse_plain_ref() {
        const std::size_t start = pos_;
        bool col_abs = false;
        if (!eof() && peek() == '$') {
            col_abs = true;
            ++pos_;
        }
        std::string letters;
        while (!eof() && std::isalpha(static_cast<unsigned char>(peek())))
            letters.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(text_[pos_++]))));
        bool row_abs = false;
        if (!eof() && peek() == '$') {
            row_abs = true;
            ++pos_;
        }
        long long row = 0;
        const std::size_t digits_at = pos_;
        while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
            row = row * 10 + (text_[pos_++] - '0');
            if (row > 100'000'000) fail(start, "row number out of range");
        }
        if (letters.empty() || pos_ == digits_at) fail(start, "expected cell reference");
        const auto col = parse_column_letters(letters);
        if (!col || row < 1) fail(start, "bad cell reference");
        return CellAddress{*col, static_cast<int>(row), col_abs, row_abs};
    }

    Expr parse_call(const std::string& name, std::size_t name_at) {
        const FuncSig* sig = find_function(name);
        if (!sig)
            throw FormulaParseError(ParseErrc::UnknownFunction, name_at,
                                    "unknown function: " + name, name);
        accept('(');
        FuncExpr call;
        call.name = name;
        skip_ws();
        if (!eof() && peek() == ')') {
            ++pos_;
        } else {
            for (;;) {
                call.args.push_back(parse_expr());
                skip_ws();
                if (accept(';') || accept(',')) continue;
                if (accept(')')) break;
                fail(pos_, "expected ')', ';' or ','");
            }
        }
        const int got = static_cast<int>(call.args.size());
        if (got < sig->min_arity || (sig->max_arity >= 0 && got > sig->max_arity))
            throw FormulaParseError(ParseErrc::Arity, name_at,
                                    name + " expects " + std::to_string(sig->min_arity) +
                                        (sig->max_arity < 0        ? "+ arguments"
                                         : sig->max_arity == sig->min_arity
                                             ? " arguments"
                                             : ".." + std::to_string(sig->max_arity) +
                                                   " arguments") +
                                        ", got " + std::to_string(got),
                                    name, got, sig->min_arity);
        Expr e;
        e.node = std::move(call);
        return e;
    }

    static Expr make_binary(BinaryOp op, Expr left, Expr right) {
        Expr e;
        e.node = BinaryExpr{op, std::make_unique<Expr>(std::move(left)),
                            std::make_unique<Expr>(std::move(right))};
        return e;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

// --- printing ---------------------------------------------------------------

// Binding strengths for minimal parenthesization.
constexpr int kAddPrec = 1;
constexpr int kMulPrec = 2;
constexpr int kPowPrec = 3;
constexpr int kUnaryPrec = 4;
constexpr int kAtomPrec = 5;

int precedence_of(const Expr& e) {
    if (const auto* b = std::get_if<BinaryExpr>(&e.node)) {
        switch (b->op) {
            case BinaryOp::Add:
            case BinaryOp::Sub: return kAddPrec;
            case BinaryOp::Mul:
            case BinaryOp::Div: return kMulPrec;
            case BinaryOp::Pow: return kPowPrec;
        }
    }
    if (std::holds_alternative<NegExpr>(e.node)) return kUnaryPrec;
    if (const auto* n = std::get_if<NumExpr>(&e.node))
        if (n->value < 0) return kUnaryPrec;  // prints with a leading '-'
    return kAtomPrec;
}

char op_char(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return '+';
        case BinaryOp::Sub: return '-';
        case BinaryOp::Mul: return '*';
        case BinaryOp::Div: return '/';
        case BinaryOp::Pow: return '^';
    }
    return '?';
}

void print_expr(const Expr& e, char sep, std::string& out);

void print_child(const Expr& child, char sep, int min_prec, std::string& out) {
    if (precedence_of(child) < min_prec) {
        out.push_back('(');
        print_expr(child, sep, out);
        out.push_back(')');
    } else {
        print_expr(child, sep, out);
    }
}

void print_expr(const Expr& e, char sep, std::string& out) {
    if (const auto* n = std::get_if<NumExpr>(&e.node)) {
        out += render_number(n->value);
    } else if (const auto* r = std::get_if<RefExpr>(&e.node)) {
        out += render_address(r->address);
    } else if (const auto* rg = std::get_if<RangeExpr>(&e.node)) {
        out += render_range(rg->range);
    } else if (const auto* f = std::get_if<FuncExpr>(&e.node)) {
        out += f->name;
        out.push_back('(');
        for (std::size_t i = 0; i < f->args.size(); ++i) {
            if (i) out.push_back(sep);
            print_expr(f->args[i], sep, out);
        }
        out.push_back(')');
    } else if (const auto* neg = std::get_if<NegExpr>(&e.node)) {
        out.push_back('-');
        print_child(*neg->operand, sep, kUnaryPrec, out);
    } else {
        const auto& b = std::get<BinaryExpr>(e.node);
        const int prec = precedence_of(e);
        if (b.op == BinaryOp::Pow) {
            // Right-associative: the left side needs parens at equal strength.
            print_child(*b.left, sep, prec + 1, out);
            out.push_back(op_char(b.op));
            print_child(*b.right, sep, prec, out);
        } else {
            print_child(*b.left, sep, prec, out);
            out.push_back(op_char(b.op));
            print_child(*b.right, sep, prec + 1, out);
        }
    }
}

}  // namespace

Expr Expr::clone() const {
    Expr out;
    if (const auto* n = std::get_if<NumExpr>(&node)) {
        out.node = *n;
    } else if (const auto* r = std::get_if<RefExpr>(&node)) {
        out.node = *r;
    } else if (const auto* rg = std::get_if<RangeExpr>(&node)) {
        out.node = *rg;
    } else if (const auto* f = std::get_if<FuncExpr>(&node)) {
        FuncExpr copy;
        copy.name = f->name;
        copy.args.reserve(f->args.size());
        for (const auto& a : f->args) copy.args.push_back(a.clone());
        out.node = std::move(copy);
    } else if (const auto* neg = std::get_if<NegExpr>(&node)) {
        out.node = NegExpr{std::make_unique<Expr>(neg->operand->clone())};
    } else {
        const auto& b = std::get<BinaryExpr>(node);
        out.node = BinaryExpr{b.op, std::make_unique<Expr>(b.left->clone()),
                              std::make_unique<Expr>(b.right->clone())};
    }
    return out;
}

bool expr_equal(const Expr& a, const Expr& b) {
    if (a.node.index() != b.node.index()) return false;
    if (const auto* n = std::get_if<NumExpr>(&a.node))
        return bits_equal(n->value, std::get<NumExpr>(b.node).value);
    if (const auto* r = std::get_if<RefExpr>(&a.node))
        return r->address == std::get<RefExpr>(b.node).address;
    if (const auto* rg = std::get_if<RangeExpr>(&a.node))
        return rg->range == std::get<RangeExpr>(b.node).range;
    if (const auto* f = std::get_if<FuncExpr>(&a.node)) {
        const auto& g = std::get<FuncExpr>(b.node);
        if (f->name != g.name || f->args.size() != g.args.size()) return false;
        for (std::size_t i = 0; i < f->args.size(); ++i)
            if (!expr_equal(f->args[i], g.args[i])) return false;
        return true;
    }
    if (const auto* neg = std::get_if<NegExpr>(&a.node))
        return expr_equal(*neg->operand, *std::get<NegExpr>(b.node).operand);
    const auto& ba = std::get<BinaryExpr>(a.node);
    const auto& bb = std::get<BinaryExpr>(b.node);
    return ba.op == bb.op && expr_equal(*ba.left, *bb.left) && expr_equal(*ba.right, *bb.right);
}

Expr parse_formula(std::string_view text) { return FormulaParser(text).run(); }

std::string print_formula(const Expr& expr, char separator) {
    std::string out = "=";
    print_expr(expr, separator, out);
    return out;
}

}  // namespace celltrail
