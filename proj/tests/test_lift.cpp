#include <doctest.h>

#include "test_support.hpp"

#include "farfel/diag.hpp"
#include "farfel/interp.hpp"
#include "farfel/lift.hpp"

using namespace farfel;
using testsupport::header_of;
using testsupport::parse_fixture;
using testsupport::pipeline_for;

TEST_CASE("lifting the equilibrium fixture produces the expected headers") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    CHECK(header_of(r.specialized, "ARGMAX_FPRIME") == "FUNCTION ARGMAX_FPRIME(X, F)");
    CHECK(header_of(r.specialized, "ROOT_1") == "FUNCTION ROOT_1(F, F1, X0, N)");
    CHECK(header_of(r.specialized, "DERIV2_1") == "SUBROUTINE DERIV2_1(F, F1, X, Y, YPRIME)");
    CHECK(header_of(r.specialized, "EQLBRM_F_G") ==
          "FUNCTION EQLBRM_F_G(A, ASTAR, BIGA, BIGB, BSTAR, N)");
    CHECK(header_of(r.specialized, "EQLBRM_F") ==
          "FUNCTION EQLBRM_F(ASTAR, BIGA, BIGB, BSTAR, N)");
    CHECK(header_of(r.specialized, "EQLBRM_F_G_H") == "FUNCTION EQLBRM_F_G_H(B, ASTAR, BIGB)");
    // the lifted ARGMAX body
    std::string argmax = render_unit(*r.specialized.find_unit("ARGMAX"));
    CHECK(argmax.find("ARGMAX = ROOT_1(ARGMAX_FPRIME, F, X0, N)") != std::string::npos);
}

TEST_CASE("a program without nesting lifts to itself") {
    SourceProgram p = infer_types(parse_fixture("plain.f"));
    ScopeTree t = resolve_scopes(p);
    LiftContext ctx;
    SourceProgram lifted = lift_nested(p, t, ctx);
    CHECK(structurally_equal(p, lifted));
}

TEST_CASE("specialization is memoized per key") {
    // nest08: P passed twice with the same key, Q once with a different one
    PipelineResult r = pipeline_for("nest08.f");
    int apply_specs = 0;
    for (const auto& u : r.specialized.units)
        if (u.name.rfind("APPLY_", 0) == 0) ++apply_specs;
    CHECK(apply_specs == 2);
}

TEST_CASE("the two nested argmax uses call two distinct specializations") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    REQUIRE(r.lifted.find_unit("ARGMAX_1") != nullptr);
    REQUIRE(r.lifted.find_unit("ARGMAX_2") != nullptr);
    CHECK(std::string("ARGMAX_1") != "ARGMAX_2");
    // derivatives of both flow into the final program
    bool spec1 = false, spec2 = false;
    for (const auto& u : r.final_program.units) {
        if (u.name.rfind("ARGMAX_1", 0) == 0) spec1 = true;
        if (u.name.rfind("ARGMAX_2", 0) == 0) spec2 = true;
    }
    CHECK(spec1);
    CHECK(spec2);
}

TEST_CASE("the iteration count is passed to the specialized ROOT exactly once") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    const Subprogram* eq = r.prepared.find_unit("EQLBRM");
    REQUIRE(eq != nullptr);
    int n_count = -1;
    for_each_statement(eq->body, [&](const Statement& st) {
        for_each_expr_in(st, [&](const Expr& top) {
            for_each_subexpr(top, [&](const Expr& e) {
                if (e.kind == Expr::Kind::Call && e.name.rfind("ROOT_", 0) == 0) {
                    int c = 0;
                    for (const Expr& a : e.args)
                        if (a.kind == Expr::Kind::Var && a.name == "N") ++c;
                    n_count = c;
                }
            });
        });
    });
    CHECK(n_count == 1);
}

TEST_CASE("the merge reuses the formal of the same name in nest07") {
    PipelineResult r = pipeline_for("nest07.f");
    const Subprogram* spec = nullptr;
    for (const auto& u : r.specialized.units)
        if (u.name.rfind("TAKER_", 0) == 0) spec = &u;
    REQUIRE(spec != nullptr);
    // N appears once in the parameter list; the closure slot merged into it
    int n_params = 0;
    for (const auto& p : spec->params)
        if (p == "N") ++n_params;
    CHECK(n_params == 1);
    CHECK(spec->params.size() == 3);  // F, X0, N: the N slot merged away
}

TEST_CASE("an alias that may be assigned is a compile error naming the variable") {
    CHECK_THROWS_WITH_AS(pipeline_for("alias_err.f"), doctest::Contains("X"), CompileError);
    try {
        pipeline_for("alias_err.f");
    } catch (const CompileError& e) {
        CHECK(std::string(e.what()).find("passed twice") != std::string::npos);
        CHECK(e.pass() == "lifting");
    }
}

TEST_CASE("benign duplicated arguments are allowed") {
    CHECK_NOTHROW(pipeline_for("eqlbrm.f"));
}

TEST_CASE("constant propagation eliminates EXTERNAL declarations from AD-reachable units") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    std::vector<std::string> roots;
    for (const auto& b : r.blocks) roots.push_back(b.extracted);
    auto tree = reachable_units(r.prepared, roots);
    for (const auto& name : tree) {
        const Subprogram* u = r.prepared.find_unit(name);
        REQUIRE(u != nullptr);
        INFO(name);
        CHECK(u->externals.empty());
        for (const auto& d : u->decls) CHECK(d.kind != Declaration::Kind::External);
    }
}

TEST_CASE("an unconsumed external parameter survives propagation") {
    // APPLY keeps its external when called with two different functions
    std::string src = "      FUNCTION APPLY(F, X)\n      EXTERNAL F\n      APPLY = F(X)\n      END\n"
                      "      FUNCTION A1(X)\n      A1 = X+1.0\n      END\n"
                      "      FUNCTION A2(X)\n      A2 = X+2.0\n      END\n"
                      "      PROGRAM T\n      R = APPLY(A1, 1.0)+APPLY(A2, 1.0)\n"
                      "      PRINT R\n      END\n";
    PipelineResult r = run_pipeline(parse_source(src, "t.f"));
    const Subprogram* ap = r.prepared.find_unit("APPLY");
    REQUIRE(ap != nullptr);
    CHECK(ap->externals.count("F") == 1);
    auto out = interpret(r.final_program, {}).output;
    REQUIRE(out.size() == 1);
    CHECK(std::stod(out[0]) == 5.0);
}

TEST_CASE("dead-code elimination removes the originals and intermediates") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    for (const char* gone : {"ROOT", "DERIV2", "ARGMAX", "DERIV1", "ARGMAX_FPRIME", "ROOT_1",
                             "DERIV2_1"}) {
        INFO(gone);
        CHECK(r.final_program.find_unit(gone) == nullptr);
    }
    // unit count equals the reachable set exactly
    auto live = reachable_units(r.final_program, {"EQGAME"});
    CHECK(live.size() == r.final_program.units.size());
}

TEST_CASE("a fully reachable program passes DCE unchanged") {
    PipelineResult r = pipeline_for("plain.f");
    CHECK(structurally_equal(r.prepared, r.final_program));
    CHECK(r.final_program.units.size() == 1);
}

TEST_CASE("semantics preservation: reference vs lifted pipeline on every nesting fixture") {
    struct Case {
        const char* name;
        std::vector<std::string> input;
    };
    std::vector<Case> cases = {
        {"nest01.f", {"3.5"}},   {"nest02.f", {"1.25", "2.0"}}, {"nest03.f", {"4.0"}},
        {"nest04.f", {"2.5"}},   {"nest05.f", {"0.75"}},        {"nest06.f", {"1.5"}},
        {"nest07.f", {"4"}},     {"nest08.f", {"1.5", "2.5"}},  {"nest09.f", {"0.5"}},
        {"nest10.f", {"3"}},     {"nest11.f", {"2.0"}},         {"nest12.f", {"3.0"}},
    };
    for (const auto& c : cases) {
        SourceProgram typed = infer_types(parse_fixture(c.name));
        auto ref = interpret_reference(typed, c.input, {}).output;
        PipelineResult r = run_pipeline(parse_fixture(c.name));
        auto std_out = interpret(r.final_program, c.input, {}).output;
        INFO(c.name);
        CHECK(ref == std_out);
        REQUIRE(!ref.empty());
    }
}

TEST_CASE("specialization cycles through recursion are rejected") {
    std::string src = "      FUNCTION REC(F, X)\n      EXTERNAL F\n      REC = REC(F, X)+F(X)\n"
                      "      END\n"
                      "      SUBROUTINE S(A, R)\n"
                      "        FUNCTION Q(X)\n        Q = X+A\n        END\n"
                      "      R = REC(Q, 1.0)\n      END\n"
                      "      PROGRAM T\n      CALL S(1.0, R)\n      PRINT R\n      END\n";
    CHECK_THROWS_WITH_AS(run_pipeline(parse_source(src, "t.f")), doctest::Contains("cycle"),
                         CompileError);
}

TEST_CASE("lifted names avoid existing top-level unit names") {
    std::string src = "      FUNCTION S_Q(X)\n      S_Q = X*3.0\n      END\n"
                      "      SUBROUTINE S(A, R)\n"
                      "        FUNCTION Q(X)\n        Q = X+A\n        END\n"
                      "      R = Q(1.0)+S_Q(A)\n      END\n"
                      "      PROGRAM TMAIN\n      READ A\n      CALL S(A, R)\n"
                      "      PRINT R\n      END\n";
    PipelineResult r = run_pipeline(parse_source(src, "t.f"));
    std::set<std::string> names;
    for (const auto& u : r.specialized.units) {
        INFO(u.name);
        CHECK(names.insert(u.name).second);
    }
    auto out = interpret(r.final_program, {"2.0"}).output;
    CHECK(std::stod(out[0]) == (1.0 + 2.0) + 2.0 * 3.0);
}
