#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "celltrail/bench.hpp"
#include "celltrail/eval.hpp"
#include "celltrail/formula.hpp"
#include "test_support.hpp"

using namespace celltrail;

namespace {

// The appendix-style main-section formula in its canonical spacing.
const char* kBenchCell =
    "=INDEX(MINVERSE(OFFSET($A$1;1+MAX(0;$A3-C$1);1+MAX(0;C$1-$A3);MIN(C$1;$A3);MIN(C$1;$A3)));1;1)";

Expr num(double v) {
    Expr e;
    e.node = NumExpr{v};
    return e;
}

Expr ref(const char* text) {
    Expr e;
    e.node = RefExpr{*parse_address(text)};
    return e;
}

Expr bin(BinaryOp op, Expr l, Expr r) {
    Expr e;
    e.node = BinaryExpr{op, std::make_unique<Expr>(std::move(l)),
                        std::make_unique<Expr>(std::move(r))};
    return e;
}

/// Random tree in parser-canonical form (non-negative literals, normalized
/// ranges, uppercase names).
Expr random_expr(std::mt19937_64& rng, int depth) {
    std::uniform_int_distribution<int> leaf(0, 2);
    std::uniform_int_distribution<int> node(0, 5);
    if (depth <= 0 || node(rng) == 0) {
        switch (leaf(rng)) {
            case 0: {
                const double v = std::uniform_real_distribution<double>(0, 1000)(rng);
                return num(std::uniform_int_distribution<int>(0, 1)(rng) ? std::floor(v) : v);
            }
            case 1: {
                Expr e;
                e.node = RefExpr{CellAddress{std::uniform_int_distribution<int>(1, 60)(rng),
                                             std::uniform_int_distribution<int>(1, 60)(rng),
                                             static_cast<bool>(rng() & 1),
                                             static_cast<bool>(rng() & 1)}};
                return e;
            }
            default: {
                Expr e;
                e.node = RangeExpr{normalize_range(
                    test_support::random_addr(rng, 20, 20), test_support::random_addr(rng, 20, 20))};
                return e;
            }
        }
    }
    switch (node(rng)) {
        case 1: {
            Expr e;
            e.node = NegExpr{std::make_unique<Expr>(random_expr(rng, depth - 1))};
            return e;
        }
        case 2:
        case 3: {
            const BinaryOp ops[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div,
                                    BinaryOp::Pow};
            return bin(ops[std::uniform_int_distribution<int>(0, 4)(rng)],
                       random_expr(rng, depth - 1), random_expr(rng, depth - 1));
        }
        default: {
            struct Sig {
                const char* name;
                int min;
                int max;
            };
            const Sig sigs[] = {{"SIN", 1, 1}, {"COS", 1, 1},   {"EXP", 1, 1},
                                {"MAX", 1, 4}, {"MIN", 1, 4},   {"SUM", 1, 4},
                                {"INDEX", 3, 3}, {"OFFSET", 5, 5}, {"MINVERSE", 1, 1}};
            const Sig& sig = sigs[std::uniform_int_distribution<std::size_t>(
                0, std::size(sigs) - 1)(rng)];
            FuncExpr call;
            call.name = sig.name;
            const int arity = std::uniform_int_distribution<int>(sig.min, sig.max)(rng);
            for (int i = 0; i < arity; ++i) call.args.push_back(random_expr(rng, depth - 1));
            Expr e;
            e.node = std::move(call);
            return e;
        }
    }
}

Document eval_fixture() {
    Document doc;
    doc.set_base_cell(cell_at(1, 1), number_content(4.0));   // A1
    doc.set_base_cell(cell_at(2, 1), number_content(7.0));   // B1
    doc.set_base_cell(cell_at(1, 2), number_content(2.0));   // A2
    doc.set_base_cell(cell_at(2, 2), number_content(6.0));   // B2
    doc.set_base_cell(cell_at(4, 1), text_content("label")); // D1
    return doc;
}

double scalar_of(const Value& v) {
    REQUIRE(is_scalar(v));
    return std::get<double>(v);
}

}  // namespace

TEST_CASE("parsing the paper formulas") {
    SUBCASE("simple binary") {
        const Expr e = parse_formula("=B1+1");
        const auto& b = std::get<BinaryExpr>(e.node);
        CHECK(b.op == BinaryOp::Add);
        CHECK(std::get<RefExpr>(b.left->node).address == cell_at(2, 1));
        CHECK(std::get<NumExpr>(b.right->node).value == 1.0);
    }
    SUBCASE("separator styles parse to the identical tree") {
        const Expr semi = parse_formula("=INDEX(MINVERSE(OFFSET($A$1;1;1;1;1));1;1)");
        const Expr comma = parse_formula("=INDEX(MINVERSE(OFFSET($A$1,1,1,1,1)),1,1)");
        const Expr mixed = parse_formula("=INDEX(MINVERSE(OFFSET($A$1;1,1;1,1)),1;1)");
        CHECK(expr_equal(semi, comma));
        CHECK(expr_equal(semi, mixed));
    }
    SUBCASE("nested trig chain") {
        const Expr e = parse_formula("=EXP(SIN(COS($A7*$E$3)))");
        const auto& exp = std::get<FuncExpr>(e.node);
        CHECK(exp.name == "EXP");
        const auto& sin = std::get<FuncExpr>(exp.args[0].node);
        CHECK(sin.name == "SIN");
        const auto& cos = std::get<FuncExpr>(sin.args[0].node);
        CHECK(cos.name == "COS");
        const auto& mul = std::get<BinaryExpr>(cos.args[0].node);
        CHECK(mul.op == BinaryOp::Mul);
        CHECK(std::get<RefExpr>(mul.left->node).address == CellAddress{1, 7, true, false});
        CHECK(std::get<RefExpr>(mul.right->node).address == CellAddress{5, 3, true, true});
    }
    SUBCASE("appendix spacing is accepted and canonicalized") {
        const Expr spaced = parse_formula(
            "=INDEX(  MINVERSE( OFFSET( $A$1; 1 + MAX( 0; $A3 - C$1 ); 1 + MAX( 0; C$1 - $A3 "
            "); MIN( C$1;$A3 ); MIN( C$1;$A3 ) ) ); 1; 1)");
        CHECK(expr_equal(spaced, parse_formula(kBenchCell)));
        CHECK(print_formula(spaced, ';') == kBenchCell);
    }
    SUBCASE("case-insensitive names, lowercase refs") {
        CHECK(expr_equal(parse_formula("=sin(b2)"), parse_formula("=SIN(B2)")));
    }
}

TEST_CASE("parse errors carry positions and names") {
    auto expect_error = [](const char* text, ParseErrc code) {
        try {
            parse_formula(text);
            FAIL_CHECK(std::string("expected parse error for ") + text);
        } catch (const FormulaParseError& e) {
            CHECK(e.code() == code);
        }
    };
    expect_error("B1+1", ParseErrc::Syntax);          // no '='
    expect_error("=", ParseErrc::Syntax);
    expect_error("=1+", ParseErrc::Syntax);
    expect_error("=(1+2", ParseErrc::Syntax);
    expect_error("=A0", ParseErrc::Syntax);
    expect_error("=A1:", ParseErrc::Syntax);
    expect_error("=1 2", ParseErrc::Syntax);
    expect_error("=FOO(1)", ParseErrc::UnknownFunction);
    expect_error("=SIN()", ParseErrc::Arity);
    expect_error("=SIN(1;2)", ParseErrc::Arity);
    expect_error("=INDEX(A1:B2;1)", ParseErrc::Arity);
    expect_error("=OFFSET(A1;1;1)", ParseErrc::Arity);

    try {
        parse_formula("=1+");
    } catch (const FormulaParseError& e) {
        CHECK(e.position() == 3);
    }
    try {
        parse_formula("=FOO(1)");
    } catch (const FormulaParseError& e) {
        CHECK(e.name() == "FOO");
    }
}

TEST_CASE("operator shape: precedence and associativity") {
    CHECK(print_formula(parse_formula("=1+2*3")) == "=1+2*3");
    CHECK(print_formula(parse_formula("=(1+2)*3")) == "=(1+2)*3");
    CHECK(print_formula(parse_formula("=1-2-3")) == "=1-2-3");
    CHECK(print_formula(parse_formula("=1-(2-3)")) == "=1-(2-3)");
    CHECK(print_formula(parse_formula("=2^3^2")) == "=2^3^2");
    CHECK(print_formula(parse_formula("=(2^3)^2")) == "=(2^3)^2");
    CHECK(print_formula(parse_formula("=-2^2")) == "=-2^2");
    CHECK(print_formula(parse_formula("=2^-2")) == "=2^-2");
    CHECK(print_formula(parse_formula("=-(1+2)")) == "=-(1+2)");

    // "-2^2" binds the minus to the base: (-2)^2 = 4.
    Document doc;
    doc.set_base_cell(cell_at(1, 1), formula_content("=-2^2"));
    CHECK(scalar_of(evaluate_cell(doc, cell_at(1, 1))) == 4.0);
    // right-assoc: 2^3^2 = 2^9 = 512
    Document doc2;
    doc2.set_base_cell(cell_at(1, 1), formula_content("=2^3^2"));
    CHECK(scalar_of(evaluate_cell(doc2, cell_at(1, 1))) == 512.0);
}

TEST_CASE("print/parse round-trip over random trees") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 10000; ++i) {
        const Expr tree = random_expr(rng, 4);
        const char sep = (i & 1) ? ';' : ',';
        const std::string text = print_formula(tree, sep);
        CAPTURE(text);
        const Expr back = parse_formula(text);
        REQUIRE(expr_equal(back, tree));
    }
}

TEST_CASE("print/parse identity on the appendix fixtures modulo whitespace") {
    const char* fixtures[] = {
        "=B1+1",
        "=C1+1",
        "=sin(B2+B1)",
        "=SIN(C2+C1)",
        "=cos(B2+A2)",
        "=EXP(SIN(COS($A7*$E$3)))",
        kBenchCell,
    };
    for (const char* f : fixtures) {
        const Expr tree = parse_formula(f);
        const std::string printed = print_formula(tree, ';');
        CHECK(expr_equal(parse_formula(printed), tree));
        // Printing strips whitespace and uppercases names; nothing else.
        std::string squeezed;
        for (const char c : std::string(f))
            if (c != ' ') squeezed.push_back(static_cast<char>(std::toupper(c)));
        std::string printed_squeezed;
        for (const char c : printed) printed_squeezed.push_back(static_cast<char>(std::toupper(c)));
        CHECK(printed_squeezed == squeezed);
    }
}

TEST_CASE("evaluation basics") {
    Document doc = eval_fixture();
    auto eval_text = [&](const char* text) {
        Document d = doc;
        d.set_base_cell(cell_at(9, 9), formula_content(text));
        return evaluate_cell(d, cell_at(9, 9));
    };

    CHECK(scalar_of(eval_text("=SIN(0)")) == 0.0);
    CHECK(scalar_of(eval_text("=1+2*3")) == 7.0);
    CHECK(scalar_of(eval_text("=A1+B1")) == 11.0);
    CHECK(scalar_of(eval_text("=Z99+5")) == 5.0);  // empty cell counts as zero
    CHECK(scalar_of(eval_text("=SUM(A1:B2)")) == doctest::Approx(19.0));
    CHECK(scalar_of(eval_text("=SUM(A1:B2;1;1)")) == doctest::Approx(21.0));
    CHECK(scalar_of(eval_text("=MAX(1;A1;3)")) == 4.0);
    CHECK(scalar_of(eval_text("=MIN(A1;A2)")) == 2.0);
    CHECK(scalar_of(eval_text("=OFFSET(A1;1;1;1;1)")) == 6.0);  // 1x1 block reads B2
    CHECK(scalar_of(eval_text("=INDEX(A1:B2;2;1)")) == 2.0);
    CHECK(scalar_of(eval_text("=EXP(0)")) == 1.0);

    auto expect_eval_error = [&](const char* text, EvalErrc code) {
        try {
            eval_text(text);
            FAIL_CHECK(std::string("expected eval error for ") + text);
        } catch (const EvalError& e) {
            CHECK(e.code() == code);
        }
    };
    expect_eval_error("=1/0", EvalErrc::DivisionByZero);
    expect_eval_error("=D1+1", EvalErrc::DomainError);              // text operand
    expect_eval_error("=OFFSET(A1;-1;0;1;1)", EvalErrc::OffsetOutOfGrid);
    expect_eval_error("=OFFSET(A1;0;0;0;1)", EvalErrc::OffsetOutOfGrid);
    expect_eval_error("=OFFSET(1+1;0;0;1;1)", EvalErrc::DomainError);  // anchor not a ref
    expect_eval_error("=INDEX(A1:B2;3;1)", EvalErrc::IndexOutOfBounds);
    expect_eval_error("=MINVERSE(A1:B1)", EvalErrc::NotSquare);
    expect_eval_error("=MINVERSE(A1:B9)", EvalErrc::NotSquare);
    expect_eval_error("=SUM(D1:D1)", EvalErrc::NonNumericInMatrix);
    expect_eval_error("=MINVERSE(OFFSET(A1;0;0;3;3))", EvalErrc::NonNumericInMatrix);
    expect_eval_error("=A1^9999", EvalErrc::DomainError);
    expect_eval_error("=EXP(100000)", EvalErrc::DomainError);
}

TEST_CASE("cycles are detected with their path") {
    Document doc;
    doc.set_base_cell(cell_at(1, 1), formula_content("=B1"));
    doc.set_base_cell(cell_at(2, 1), formula_content("=A1"));
    try {
        evaluate_cell(doc, cell_at(1, 1));
        FAIL("expected CycleDetected");
    } catch (const EvalError& e) {
        CHECK(e.code() == EvalErrc::CycleDetected);
        CHECK(std::string(e.what()).find("A1") != std::string::npos);
        CHECK(std::string(e.what()).find("B1") != std::string::npos);
    }
    Document self;
    self.set_base_cell(cell_at(1, 1), formula_content("=A1+1"));
    CHECK_THROWS_AS(evaluate_cell(self, cell_at(1, 1)), EvalError);
}

TEST_CASE("minverse") {
    SUBCASE("identity") {
        Matrix id(3, 3);
        for (int i = 0; i < 3; ++i) id.at(i, i) = 1.0;
        const Matrix inv = minverse(id);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                CHECK(inv.at(r, c) == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-12));
    }
    SUBCASE("2x2 against the adjugate formula") {
        Matrix m(2, 2);
        m.at(0, 0) = 4;
        m.at(0, 1) = 7;
        m.at(1, 0) = 2;
        m.at(1, 1) = 6;
        const Matrix inv = minverse(m);
        // det = 10; adjugate/det gives the exact entries.
        CHECK(inv.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(inv.at(0, 1) == doctest::Approx(-0.7).epsilon(1e-12));
        CHECK(inv.at(1, 0) == doctest::Approx(-0.2).epsilon(1e-12));
        CHECK(inv.at(1, 1) == doctest::Approx(0.4).epsilon(1e-12));
    }
    SUBCASE("singular matrix is refused") {
        Matrix m(2, 2);
        m.at(0, 0) = 1;
        m.at(0, 1) = 2;
        m.at(1, 0) = 2;
        m.at(1, 1) = 4;
        try {
            minverse(m);
            FAIL("expected Singular");
        } catch (const EvalError& e) {
            CHECK(e.code() == EvalErrc::Singular);
        }
    }
    SUBCASE("size cap") {
        Matrix m(3, 3);
        for (int i = 0; i < 3; ++i) m.at(i, i) = 1.0;
        EvalOptions small;
        small.minverse_cap = 2;
        try {
            minverse(m, small);
            FAIL("expected MatrixTooLarge");
        } catch (const EvalError& e) {
            CHECK(e.code() == EvalErrc::MatrixTooLarge);
        }
    }
    SUBCASE("random well-conditioned matrices invert to 1e-8") {
        std::mt19937_64 rng(37);
        for (int round = 0; round < 200; ++round) {
            const int n = std::uniform_int_distribution<int>(1, 12)(rng);
            Eigen::MatrixXd a(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c)
                    a(r, c) = std::uniform_real_distribution<double>(-1, 1)(rng);
            a += n * Eigen::MatrixXd::Identity(n, n);  // keep it well-conditioned
            const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
            const double cond =
                svd.singularValues()(0) / svd.singularValues()(n - 1);
            if (cond > 1e6) continue;

            Matrix m(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) m.at(r, c) = a(r, c);
            const Matrix inv = minverse(m);

            // ||A * inv - I||_inf
            double residual = 0.0;
            for (int r = 0; r < n; ++r) {
                double row_sum = 0.0;
                for (int c = 0; c < n; ++c) {
                    double dot = 0.0;
                    for (int k = 0; k < n; ++k) dot += a(r, k) * inv.at(k, c);
                    row_sum += std::abs(dot - (r == c ? 1.0 : 0.0));
                }
                residual = std::max(residual, row_sum);
            }
            CHECK(residual <= 1e-8);

            // And agree with an independent dense routine.
            const Eigen::MatrixXd reference = a.inverse();
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c)
                    CHECK(inv.at(r, c) ==
                          doctest::Approx(reference(r, c)).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("recalculate") {
    SUBCASE("literal-only document evaluates nothing") {
        Document doc;
        doc.set_base_cell(cell_at(1, 1), number_content(1.0));
        doc.set_base_cell(cell_at(2, 2), number_content(2.0));
        const RecalcStats stats = recalculate(doc);
        CHECK(stats.cells_evaluated == 0);
        CHECK(*doc.cached_value_at(cell_at(1, 1)) == 1.0);
    }
    SUBCASE("memoization visits each formula cell once") {
        Document doc;
        doc.set_base_cell(cell_at(1, 1), number_content(2.0));
        doc.set_base_cell(cell_at(1, 2), formula_content("=A1+1"));
        doc.set_base_cell(cell_at(1, 3), formula_content("=A2+A2+A2"));
        doc.set_base_cell(cell_at(1, 4), formula_content("=A3+A2"));
        const RecalcStats stats = recalculate(doc);
        CHECK(stats.cells_evaluated == 3);
        CHECK(*doc.cached_value_at(cell_at(1, 4)) == 12.0);
        CHECK(stats.max_dependency_depth >= 2);
    }
    SUBCASE("deterministic across repeated runs") {
        std::mt19937_64 rng(41);
        Document doc = test_support::random_base_document(rng, 0);
        for (int i = 1; i <= 6; ++i) {
            doc.set_base_cell(cell_at(1, i), number_content(i * 1.25));
            doc.set_base_cell(cell_at(2, i), formula_content("=A" + std::to_string(i) + "*2"));
        }
        recalculate(doc);
        std::vector<double> first;
        for (int i = 1; i <= 6; ++i) first.push_back(*doc.cached_value_at(cell_at(2, i)));
        recalculate(doc);
        for (int i = 1; i <= 6; ++i)
            CHECK(bits_equal(first[static_cast<std::size_t>(i - 1)],
                             *doc.cached_value_at(cell_at(2, i))));
    }
    SUBCASE("order independence: shuffled per-cell evaluation agrees") {
        Document doc = bench::generate_bench_a(4, 2.0);
        Document copy = doc;
        recalculate(doc);

        std::vector<std::pair<GridPos, double>> expected;
        for (const auto& [pos, cell] : doc.sheet(0).cells)
            if (is_formula(cell.content)) expected.emplace_back(pos, *cell.cached_value);

        std::mt19937_64 rng(43);
        std::shuffle(expected.begin(), expected.end(), rng);
        for (const auto& [pos, want] : expected) {
            const Value got = evaluate_cell(copy, grid_addr(pos));
            CHECK(scalar_of(got) == doctest::Approx(want).epsilon(1e-15));
        }
    }
    SUBCASE("errors are tagged with the failing cell") {
        Document doc;
        doc.set_base_cell(cell_at(1, 1), formula_content("=1/0"));
        try {
            recalculate(doc);
            FAIL("expected DivisionByZero");
        } catch (const EvalError& e) {
            CHECK(e.code() == EvalErrc::DivisionByZero);
            CHECK(std::string(e.what()).find("A1") != std::string::npos);
        }
    }
}

TEST_CASE("bench A recalculation matches the dense-inverse oracle at size 2") {
    Document doc = bench::generate_bench_a(2, 2.0);
    recalculate(doc);
    // Independent scalar chain: blocks are B2, C2, B3, and B2:C3.
    const double s2 = std::sin(2.0), c2 = std::cos(2.0);
    CHECK(*doc.cached_value_at(cell_at(3, 3)) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(*doc.cached_value_at(cell_at(4, 3)) == doctest::Approx(1.0 / s2).epsilon(1e-9));
    CHECK(*doc.cached_value_at(cell_at(3, 4)) == doctest::Approx(1.0 / c2).epsilon(1e-9));
    const double det = 2.0 * 0.5 - s2 * c2;
    CHECK(*doc.cached_value_at(cell_at(4, 4)) == doctest::Approx(0.5 / det).epsilon(1e-9));
    // The spec's printed values, at its stated tolerance.
    CHECK(*doc.cached_value_at(cell_at(4, 3)) == doctest::Approx(1.099750).epsilon(1e-6));
    CHECK(*doc.cached_value_at(cell_at(3, 4)) == doctest::Approx(-2.402998).epsilon(1e-6));
    CHECK(*doc.cached_value_at(cell_at(4, 4)) == doctest::Approx(0.362740).epsilon(1e-6));
}

TEST_CASE("formula cells memoize through OFFSET-discovered dependencies") {
    // D4's block includes main cell C3; demand evaluation must resolve it.
    Document doc = bench::generate_bench_a(2, 2.0);
    const RecalcStats stats = recalculate(doc);
    int formula_cells = 0;
    for (const auto& [pos, cell] : doc.sheet(0).cells)
        if (is_formula(cell.content)) ++formula_cells;
    CHECK(stats.cells_evaluated <= formula_cells);
    CHECK(stats.cells_evaluated == formula_cells);  // every formula cached exactly once
}
