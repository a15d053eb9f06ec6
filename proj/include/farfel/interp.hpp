#pragma once

#include "farfel/ast.hpp"

#include <optional>
#include <string>
#include <vector>

namespace farfel {

struct Value {
    enum class Tag { Undef, Real, Int, Proc };
    Tag tag = Tag::Undef;
    double r = 0.0;
    long i = 0;
    std::string proc;      // unit name (standard interpreter)
    int proc_env = -1;     // closure environment id (reference interpreter)

    static Value real(double v) { Value x; x.tag = Tag::Real; x.r = v; return x; }
    static Value integer(long v) { Value x; x.tag = Tag::Int; x.i = v; return x; }
    double as_real() const { return tag == Tag::Int ? static_cast<double>(i) : r; }
};

struct InterpOptions {
    bool single_precision = false;
    // Skip the tail of a DO loop once the frame state provably repeats
    // (period 1 or 2); only applied to loops whose call tree does no I/O and
    // that never mention the loop variable. Output-preserving.
    bool loop_shortcut = true;
    // Reference interpreter only: execute ADF blocks as directional central
    // differences with this step (0 disables; AD blocks are then errors).
    double fd_stub_h = 0.0;
    long max_steps = 0;  // 0 = unlimited; guards runaway tests
};

struct RunResult {
    std::vector<std::string> output;
};

// Standard interpreter for the plain lowered subset (no nesting, no AD blocks).
RunResult interpret(const SourceProgram& p, const std::vector<std::string>& input,
                    const InterpOptions& opt = {});

// Call a single unit directly (test harness). Returns by-reference argument
// values after the call; for functions, *result receives the result.
std::vector<Value> call_unit(const SourceProgram& p, const std::string& unit,
                             std::vector<Value> args, const InterpOptions& opt = {},
                             double* result = nullptr);

// Reference interpreter: executes nested subprograms and lexical closures
// directly. Semantics oracle for the lifting pipeline.
RunResult interpret_reference(const SourceProgram& p, const std::vector<std::string>& input,
                              const InterpOptions& opt = {});

std::string format_value_for_print(const Value& v);

} // namespace farfel
