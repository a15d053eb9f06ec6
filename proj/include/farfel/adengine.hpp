#pragma once

#include "farfel/adlower.hpp"
#include "farfel/ast.hpp"

#include <string>

namespace farfel {

// Source-transformation forward (tangent-linear) derivative of a plain
// top-level unit; recursively transforms active callees. Returns the name of
// the generated subroutine.
std::string forward_transform(SourceProgram& p, const std::string& unit, int k, ToolStyle style);

// Reverse (adjoint) derivative: forward sweep taping overwritten values and
// trip counts, then a reverse sweep applying adjoint rules.
std::string reverse_transform(SourceProgram& p, const std::string& unit, int k, ToolStyle style);

// Apply stage `index` of the plan; stages must be applied in plan order.
void transform_stage(SourceProgram& p, const ADPlan& plan, size_t index, ToolStyle style);

} // namespace farfel
