#pragma once

#include "farfel/ast.hpp"
#include "farfel/lift.hpp"

#include <string>
#include <vector>

namespace farfel {

enum class ToolStyle { Tapenade, Adifor };

std::string derived_unit_name(const std::string& base, int k, ToolStyle style);
std::string derived_var_name(const std::string& var, int k, ToolStyle style);

struct ADBlockDescriptor {
    int block_id = 0;         // global ADF/ADR number
    bool forward = true;
    std::string origin_host;  // unit the block was written in
    std::string extracted;    // extracted top-level subroutine
    std::vector<Statement::Seed> opens;
    std::vector<Statement::Extract> closes;
    std::vector<std::string> inputs;   // extracted parameter sections
    std::vector<std::string> outputs;
};

struct ADStage {
    int block_id = 0;
    bool forward = true;
    std::string target;
    std::string suffix;              // tapenade-style, e.g. "_G3"
    std::vector<int> depends;        // indices of earlier stages in plan order
};

struct ADPlan {
    std::vector<ADStage> stages;
};

// Canonicalize each AD block into a call to a new internal subroutine and
// extract those subroutines to top level (innermost blocks first; hosts in
// name order, which fixes the global numbering). Only units reachable from
// the main program are processed.
std::vector<ADBlockDescriptor> canonicalize_and_extract(SourceProgram& p, LiftContext& ctx);

// Stage plan in dependency order (ties broken by target name); suffixes come
// from the block ids. Errors on cyclic derivative dependencies.
ADPlan plan_stages(const SourceProgram& p, std::vector<ADBlockDescriptor>& blocks);

// Rewrite every AD block into seed assignments plus a call to the derivative
// subroutine the engine (or external tool) will generate.
void rewrite_blocks(SourceProgram& p, const std::vector<ADBlockDescriptor>& blocks,
                    ToolStyle style);

std::string render_plan(const ADPlan& plan);

// External-tool driver mirroring the staged invocations, one line per stage.
std::string render_script(const ADPlan& plan, const std::string& file_stem, ToolStyle style);

} // namespace farfel
