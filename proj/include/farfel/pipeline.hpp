#pragma once

#include "farfel/adlower.hpp"
#include "farfel/analysis.hpp"
#include "farfel/ast.hpp"
#include "farfel/lift.hpp"

#include <string>

namespace farfel {

struct PipelineOptions {
    bool backend_script = false;
    ToolStyle tool_style = ToolStyle::Tapenade;
    bool run_engine = true;  // builtin backend applies the plan
};

// Snapshots after each pass, so artifacts for earlier stages never change
// when later ones are requested.
struct PipelineResult {
    SourceProgram typed;        // frontend output
    CallGraph graph;
    SourceProgram specialized;  // lift + specialize
    SourceProgram lifted;       // + external-constant propagation (closure-carrying)
    SourceProgram canonical;    // + AD block canonicalization and extraction
    SourceProgram prepared;     // + remaining propagation, block rewrite, DCE
    SourceProgram final_program;  // + builtin engine stages and final DCE
    std::vector<ADBlockDescriptor> blocks;
    ADPlan plan;
    LiftContext ctx;
};

PipelineResult run_pipeline(const SourceProgram& parsed, const PipelineOptions& opt = {});

// Dumps for --emit.
std::string dump_ast(const SourceProgram& p);

} // namespace farfel
