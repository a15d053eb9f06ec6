#include <doctest.h>

#include "test_support.hpp"

#include "farfel/adlower.hpp"
#include "farfel/diag.hpp"
#include "farfel/interp.hpp"

using namespace farfel;
using testsupport::header_of;
using testsupport::parse_fixture;
using testsupport::pipeline_for;

TEST_CASE("canonicalization introduces the internal call and extraction lifts it") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    // post-extraction, before the final propagation round
    CHECK(header_of(r.canonical, "DERIV1_1_ADF1") ==
          "SUBROUTINE DERIV1_1_ADF1(X, ASTAR, BIGA, BIGB, BSTAR, N, Y)");
    const Subprogram* host = r.canonical.find_unit("DERIV1_1");
    REQUIRE(host != nullptr);
    std::string text = render_unit(*host);
    CHECK(text.find("CALL DERIV1_1_ADF1(X, ASTAR, BIGA, BIGB, BSTAR, N, Y)") != std::string::npos);
    const Subprogram* ex = r.canonical.find_unit("DERIV1_1_ADF1");
    std::string body = render_unit(*ex);
    CHECK(body.find("Y = EQLBRM_F_G(X, ASTAR, BIGA, BIGB, BSTAR, N)") != std::string::npos);
}

TEST_CASE("every extracted block name is unique and numbered in host order") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    std::vector<std::string> names;
    for (const auto& b : r.blocks) names.push_back(b.extracted);
    std::vector<std::string> expect = {"DERIV1_1_ADF1", "DERIV1_2_ADF2", "DERIV2_1_1_ADF3",
                                       "DERIV2_1_2_ADF4", "DERIV2_2_ADF5"};
    CHECK(names == expect);
}

TEST_CASE("the fixture plan follows the external-tool staging order") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    REQUIRE(r.plan.stages.size() == 5);
    std::vector<std::string> targets, suffixes;
    for (const auto& s : r.plan.stages) {
        targets.push_back(s.target);
        suffixes.push_back(s.suffix);
    }
    CHECK(targets == std::vector<std::string>{"DERIV1_2_ADF2", "DERIV2_1_2_ADF4", "DERIV1_1_ADF1",
                                              "DERIV2_1_1_ADF3", "DERIV2_2_ADF5"});
    CHECK(suffixes == std::vector<std::string>{"_G2", "_G4", "_G1", "_G3", "_G5"});
    // suffix uniqueness
    std::set<std::string> uniq(suffixes.begin(), suffixes.end());
    CHECK(uniq.size() == suffixes.size());
    // topological: every dependency index precedes the stage
    for (size_t i = 0; i < r.plan.stages.size(); ++i)
        for (int d : r.plan.stages[i].depends) CHECK(d < static_cast<int>(i));
}

TEST_CASE("derivatives of the innermost objective precede derivatives of its callers") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    // EQLBRM_F_G_H is differentiated by stage _G2; units calling EQLBRM_F_G
    // are differentiated by _G1/_G3/_G5
    std::map<std::string, size_t> order;
    for (size_t i = 0; i < r.plan.stages.size(); ++i) order[r.plan.stages[i].suffix] = i;
    CHECK(order.at("_G2") < order.at("_G1"));
    CHECK(order.at("_G2") < order.at("_G3"));
    CHECK(order.at("_G4") < order.at("_G1"));
    CHECK(order.at("_G1") < order.at("_G3"));
    CHECK(order.at("_G3") < order.at("_G5"));
}

TEST_CASE("a single-block program yields one stage with suffix _G1") {
    PipelineResult r = pipeline_for("adf_square.f");
    REQUIRE(r.plan.stages.size() == 1);
    CHECK(r.plan.stages[0].suffix == "_G1");
    CHECK(r.plan.stages[0].depends.empty());
}

TEST_CASE("nested blocks canonicalize innermost-first and order the stages") {
    PipelineResult r = pipeline_for("nested_blocks.f");
    REQUIRE(r.plan.stages.size() == 2);
    CHECK(r.plan.stages[0].target == "T_ADF1");
    CHECK(r.plan.stages[1].target == "T_ADF2");
    REQUIRE(r.plan.stages[1].depends.size() == 1);
    CHECK(r.plan.stages[1].depends[0] == 0);
    // the outer extracted subroutine contains the inner's rewritten call
    const Subprogram* outer = r.prepared.find_unit("T_ADF2");
    REQUIRE(outer != nullptr);
    std::string text = render_unit(*outer);
    CHECK(text.find("T_ADF1_G1") != std::string::npos);
}

TEST_CASE("cyclic derivative dependencies are rejected") {
    CHECK_THROWS_WITH_AS(pipeline_for("cycle.f"), doctest::Contains("cyclic"), CompileError);
}

TEST_CASE("the rewritten DERIV1_1 seeds actives and zero-fills the rest") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    const Subprogram* host = r.prepared.find_unit("DERIV1_1");
    REQUIRE(host != nullptr);
    std::string text = render_unit(*host);
    size_t x = text.find("X_G1 = 1");
    size_t a = text.find("ASTAR_G1 = 0");
    size_t b = text.find("BSTAR_G1 = 0");
    size_t call = text.find("CALL DERIV1_1_ADF1_G1(");
    REQUIRE(x != std::string::npos);
    REQUIRE(a != std::string::npos);
    REQUIRE(b != std::string::npos);
    REQUIRE(call != std::string::npos);
    CHECK(x < a);
    CHECK(a < b);
    CHECK(b < call);
    // the function result receives the extracted tangent directly
    CHECK(text.find("Y, DERIV1_1)") != std::string::npos);
    // no tangent companions for the integer or the externals
    CHECK(text.find("N_G1") == std::string::npos);
    CHECK(text.find("BIGA_G1") == std::string::npos);
}

TEST_CASE("after lowering no ADF or ADR blocks remain") {
    for (const char* name : {"eqlbrm.f", "adf_square.f", "adr_seed.f", "nested_blocks.f"}) {
        PipelineResult r = pipeline_for(name);
        int blocks = 0;
        for (const auto& u : r.final_program.units)
            for_each_statement(u.body, [&](const Statement& st) {
                if (st.kind == Statement::Kind::AdBlock) ++blocks;
            });
        INFO(name);
        CHECK(blocks == 0);
        std::string text = render(r.final_program);
        CHECK(text.find("ADF(") == std::string::npos);
        CHECK(text.find("ADR(") == std::string::npos);
    }
}

TEST_CASE("stage targets never call a later stage's derivative") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    std::set<std::string> generated;
    for (size_t i = 0; i < r.plan.stages.size(); ++i) {
        const auto& s = r.plan.stages[i];
        // scan the call closure of this stage's target for derivative names of
        // not-yet-generated stages
        auto tree = reachable_units(r.prepared, {s.target});
        for (const auto& unit_name : tree) {
            const Subprogram* u = r.prepared.find_unit(unit_name);
            for_each_statement(u->body, [&](const Statement& st) {
                auto chk = [&](const std::string& callee) {
                    for (size_t j = 0; j < r.plan.stages.size(); ++j) {
                        const std::string sfx = r.plan.stages[j].suffix;
                        if (callee.size() > sfx.size() &&
                            callee.compare(callee.size() - sfx.size(), sfx.size(), sfx) == 0) {
                            INFO(s.target << " reaches " << callee);
                            CHECK(generated.count(sfx) == 1);
                        }
                    }
                };
                if (st.kind == Statement::Kind::Call) chk(st.callee);
                for_each_expr_in(st, [&](const Expr& top) {
                    for_each_subexpr(top, [&](const Expr& e) {
                        if (e.kind == Expr::Kind::Call) chk(e.name);
                    });
                });
            });
        }
        generated.insert(s.suffix);
    }
}

TEST_CASE("errors: empty block, integer actives, I/O inside blocks") {
    auto lower = [](const std::string& body) {
        std::string src = "      PROGRAM T\n      READ X\n" + body + "      PRINT X\n      END\n";
        return run_pipeline(parse_source(src, "t.f"));
    };
    CHECK_THROWS_WITH_AS(lower("      ADF(X)\n      END ADF(T1 = TANGENT(X))\n"),
                         doctest::Contains("empty"), CompileError);
    CHECK_THROWS_WITH_AS(lower("      ADF(N)\n      N = 2\n      END ADF(T1 = TANGENT(N))\n"),
                         doctest::Contains("non-real"), CompileError);
    CHECK_THROWS_WITH_AS(
        lower("      ADF(X)\n      Y = X\n      PRINT Y\n      END ADF(T1 = TANGENT(Y))\n"),
        doctest::Contains("I/O"), CompileError);
    CHECK_THROWS_WITH_AS(lower("      ADF(X)\n      Y = X\n      END ADF(M = TANGENT(Y))\n"),
                         doctest::Contains("writable"), CompileError);
}

TEST_CASE("reverse seed timing: the cotangent input uses the end-of-forward value") {
    PipelineResult r = pipeline_for("adr_seed.f");
    auto out = interpret(r.final_program, {"3.0"}).output;
    REQUIRE(out.size() == 1);
    CHECK(std::abs(std::stod(out[0]) - 54.0) < 1e-12);
    // the seed is buffered in a _SEED_ temporary after the primal call
    const Subprogram* host = r.prepared.find_unit("T");
    std::string text = render_unit(*host);
    size_t primal = text.find("CALL T_ADR1(");
    size_t seed = text.find("Y_SEED_G1 = Y");
    size_t adj = text.find("CALL T_ADR1_G1(");
    REQUIRE(primal != std::string::npos);
    REQUIRE(seed != std::string::npos);
    REQUIRE(adj != std::string::npos);
    CHECK(primal < seed);
    CHECK(seed < adj);
}

TEST_CASE("the tapenade-style script lists accumulated inputs per stage") {
    PipelineResult r = pipeline_for("eqlbrm.f");
    std::string script = render_script(r.plan, "eqlbrm", ToolStyle::Tapenade);
    std::string expect =
        "#! /bin/sh\n"
        "tapenade -root deriv1_2_adf2 -d -o eqlbrm -diffvarname \"_g2\" -difffuncname \"_g2\" "
        "eqlbrm.f\n"
        "tapenade -root deriv2_1_2_adf4 -d -o eqlbrm -diffvarname \"_g4\" -difffuncname \"_g4\" "
        "eqlbrm{,_g2}.f\n"
        "tapenade -root deriv1_1_adf1 -d -o eqlbrm -diffvarname \"_g1\" -difffuncname \"_g1\" "
        "eqlbrm{,_g2,_g4}.f\n"
        "tapenade -root deriv2_1_1_adf3 -d -o eqlbrm -diffvarname \"_g3\" -difffuncname \"_g3\" "
        "eqlbrm{,_g2,_g4,_g1}.f\n"
        "tapenade -root deriv2_2_adf5 -d -o eqlbrm -diffvarname \"_g5\" -difffuncname \"_g5\" "
        "eqlbrm{,_g2,_g4,_g1,_g3}.f\n";
    CHECK(script == expect);
    // byte-stable across runs
    PipelineResult r2 = pipeline_for("eqlbrm.f");
    CHECK(render_script(r2.plan, "eqlbrm", ToolStyle::Tapenade) == script);
}

TEST_CASE("adifor naming style prefixes instead of suffixing") {
    CHECK(derived_unit_name("DERIV1_1_ADF1", 1, ToolStyle::Adifor) == "G1_DERIV1_1_ADF1");
    CHECK(derived_var_name("X", 3, ToolStyle::Adifor) == "G3_X");
    CHECK(derived_unit_name("DERIV1_1_ADF1", 1, ToolStyle::Tapenade) == "DERIV1_1_ADF1_G1");
    PipelineOptions opt;
    opt.tool_style = ToolStyle::Adifor;
    PipelineResult r = run_pipeline(parse_fixture("eqlbrm.f"), opt);
    auto out = interpret(r.final_program, {"1.0", "1.0", "1000"}).output;
    REQUIRE(out.size() == 2);
    CHECK(std::abs(std::stod(out[0]) - 50.0) < 1e-6);
    CHECK(std::abs(std::stod(out[1]) - 50.0) < 1e-6);
    CHECK(r.final_program.find_unit("G5_DERIV2_2_ADF5") != nullptr);
}
