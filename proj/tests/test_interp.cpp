#include <doctest.h>

#include "test_support.hpp"

#include "farfel/diag.hpp"
#include "farfel/interp.hpp"

using namespace farfel;
using testsupport::parse_fixture;
using testsupport::run_main;

static SourceProgram typed(const std::string& text) {
    return infer_types(parse_source(text, "t.f"));
}

TEST_CASE("print of a constant assignment") {
    auto p = typed("      PROGRAM T\n      Y = 1\n      PRINT Y\n      END\n");
    auto out = run_main(p, {});
    REQUIRE(out.size() == 1);
    CHECK(out[0] == "1.0");
}

TEST_CASE("newton iteration finds the root of x^2-4") {
    std::string src = "      PROGRAM T\n      READ X0\n      READ N\n      X = X0\n"
                      "      DO 10 I = 1, N\n      Y = X*X-4.0\n      YP = 2.0*X\n"
                      "   10 X = X-Y/YP\n      PRINT X\n      END\n";
    auto out = run_main(typed(src), {"1.0", "20"});
    REQUIRE(out.size() == 1);
    CHECK(std::abs(std::stod(out[0]) - 2.0) < 1e-12);
}

TEST_CASE("the loop shortcut is output-identical to the full run") {
    std::string src = "      PROGRAM T\n      READ X0\n      READ N\n      X = X0\n"
                      "      DO 10 I = 1, N\n      Y = X*X-4.0\n      YP = 2.0*X\n"
                      "   10 X = X-Y/YP\n      PRINT X\n      END\n";
    InterpOptions fast, slow;
    slow.loop_shortcut = false;
    auto a = run_main(typed(src), {"7.5", "100000"}, fast);
    auto b = run_main(typed(src), {"7.5", "100000"}, slow);
    CHECK(a == b);
}

TEST_CASE("the shortcut is disabled when the body mentions the loop variable or prints") {
    std::string counting = "      PROGRAM T\n      S = 0.0\n      DO 10 I = 1, 10\n"
                           "   10 S = S+I\n      PRINT S\n      END\n";
    auto out = run_main(typed(counting), {});
    CHECK(out[0] == "55.0");

    std::string printing = "      PROGRAM T\n      X = 1.0\n      DO 10 I = 1, 3\n"
                           "   10 PRINT X\n      END\n";
    CHECK(run_main(typed(printing), {}).size() == 3);
}

TEST_CASE("DO with a non-unit step follows the trip-count formula") {
    std::string src = "      PROGRAM T\n      S = 0.0\n      DO 10 I = 1, 10, 3\n"
                      "   10 S = S+1.0\n      PRINT S\n      PRINT I\n      END\n";
    auto out = run_main(typed(src), {});
    CHECK(out[0] == "4.0");   // i = 1,4,7,10
    CHECK(out[1] == "13");    // first value past the bound
}

TEST_CASE("zero-trip DO executes nothing") {
    std::string src = "      PROGRAM T\n      S = 1.0\n      DO 10 I = 5, 4\n"
                      "   10 S = S+1.0\n      PRINT S\n      END\n";
    CHECK(run_main(typed(src), {})[0] == "1.0");
}

TEST_CASE("runtime errors carry statement locations") {
    SUBCASE("division by zero") {
        std::string src = "      PROGRAM T\n      X = 0.0\n      Y = 1.0/X\n      PRINT Y\n      END\n";
        CHECK_THROWS_AS(run_main(typed(src), {}), RuntimeError);
    }
    SUBCASE("uninitialized read") {
        std::string src = "      PROGRAM T\n      Y = Q+1.0\n      PRINT Y\n      END\n";
        CHECK_THROWS_WITH_AS(run_main(typed(src), {}), doctest::Contains("undefined"),
                             RuntimeError);
    }
    SUBCASE("log domain") {
        std::string src = "      PROGRAM T\n      X = 0.0-1.0\n      Y = LOG(X)\n      PRINT Y\n      END\n";
        CHECK_THROWS_AS(run_main(typed(src), {}), RuntimeError);
    }
}

TEST_CASE("integer division truncates and mixed arithmetic promotes") {
    std::string src = "      PROGRAM T\n      I = 7\n      J = 2\n      K = I/J\n      PRINT K\n"
                      "      X = I/2.0\n      PRINT X\n      END\n";
    auto out = run_main(typed(src), {});
    CHECK(out[0] == "3");
    CHECK(out[1] == "3.5");
}

TEST_CASE("IF blocks with ELSE") {
    std::string src = "      PROGRAM T\n      READ X\n      IF (X .GT. 0.0) THEN\n"
                      "      Y = 1.0\n      ELSE\n      Y = 2.0\n      END IF\n"
                      "      PRINT Y\n      END\n";
    CHECK(run_main(typed(src), {"3.0"})[0] == "1.0");
    CHECK(run_main(typed(src), {"-3.0"})[0] == "2.0");
}

TEST_CASE("single precision rounds intermediate results") {
    std::string src = "      PROGRAM T\n      X = 1.0/3.0\n      PRINT X\n      END\n";
    InterpOptions single;
    single.single_precision = true;
    auto d = run_main(typed(src), {});
    auto s = run_main(typed(src), {}, single);
    CHECK(std::stod(d[0]) == 1.0 / 3.0);
    CHECK(std::stod(s[0]) == static_cast<double>(1.0f / 3.0f));
}

TEST_CASE("reference interpreter: lexical reads see the current parent value") {
    auto p = infer_types(parse_fixture("nest11.f"));
    auto out = interpret_reference(p, {"2.0"}, {}).output;
    REQUIRE(out.size() == 1);
    CHECK(std::stod(out[0]) == 2.0 * 2.0 + 2.0 * 12.0);
}

TEST_CASE("reference interpreter: shadowing uses the inner binding") {
    auto p = infer_types(parse_fixture("nest03.f"));
    auto out = interpret_reference(p, {"4.0"}, {}).output;
    REQUIRE(out.size() == 1);
    CHECK(std::stod(out[0]) == (4.0 + 1.0) * 10.0 + 4.0);
}

TEST_CASE("reference interpreter runs the pre-lift fixture with FD stubs") {
    auto p = infer_types(parse_fixture("eqlbrm.f"));
    InterpOptions opt;
    opt.fd_stub_h = 1e-4;
    auto out = interpret_reference(p, {"1.0", "1.0", "1000"}, opt).output;
    REQUIRE(out.size() == 2);
    CHECK(std::abs(std::stod(out[0]) - 50.0) < 1e-2);
    CHECK(std::abs(std::stod(out[1]) - 50.0) < 1e-2);
}

TEST_CASE("call_unit drives a unit directly") {
    std::string src = "      FUNCTION SQ(X)\n      SQ = X*X\n      END\n"
                      "      PROGRAM T\n      END\n";
    auto p = typed(src);
    double result = 0;
    call_unit(p, "SQ", {Value::real(7.0)}, {}, &result);
    CHECK(result == 49.0);
}

TEST_CASE("aliased writable arguments are caught at call time") {
    std::string src = "      SUBROUTINE S(A, B)\n      A = B+1.0\n      END\n"
                      "      PROGRAM T\n      X = 1.0\n      CALL S(X, X)\n      PRINT X\n      END\n";
    CHECK_THROWS_WITH_AS(run_main(typed(src), {}), doctest::Contains("aliased"), RuntimeError);
}

TEST_CASE("aliased read-only arguments are fine") {
    std::string src = "      FUNCTION ADD(A, B)\n      ADD = A+B\n      END\n"
                      "      PROGRAM T\n      X = 2.0\n      Y = ADD(X, X)\n      PRINT Y\n      END\n";
    CHECK(run_main(typed(src), {})[0] == "4.0");
}
