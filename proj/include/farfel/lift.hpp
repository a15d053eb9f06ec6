#pragma once

#include "farfel/analysis.hpp"
#include "farfel/ast.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace farfel {

// Carried through lifting, specialization and constant propagation.
struct LiftContext {
    // lifted unit -> ordered closure parameter names (appended after the
    // original parameters); passing the unit by name passes these too
    std::map<std::string, std::vector<std::string>> closure_params;
    std::map<std::string, int> spec_counter;      // base name -> dense counter
    std::map<std::string, std::string> spec_memo; // key -> specialized unit name
    std::set<std::string> in_progress;            // cycle detection
    std::map<std::string, std::string> spec_base; // specialized unit -> base unit
};

// Closure conversion: hoists every nested subprogram to top level with its
// free variables appended as parameters, rewrites all reference sites, and
// specializes receivers of subprogram arguments that carry closure args.
SourceProgram lift_nested(const SourceProgram& typed, const ScopeTree& scopes, LiftContext& ctx);

// Replace calls through external parameters whose value is the same known
// subprogram along all call paths; delete the parameter everywhere. Only
// parameters of units reachable from the main program are touched, and only
// when the bound subprogram carries at least `min_value_arity` closure args.
// Applied to a fixpoint; may create further specializations.
void propagate_external_constants(SourceProgram& p, LiftContext& ctx, size_t min_value_arity);

// Errors when a duplicated by-reference argument may be assigned by the callee.
void check_aliases(const SourceProgram& p);

// Which parameter positions of each unit may be assigned, directly or through
// calls (conservatively including calls through externals).
std::map<std::string, std::set<size_t>> assigned_param_positions(const SourceProgram& p);

std::set<std::string> reachable_units(const SourceProgram& p,
                                      const std::vector<std::string>& roots);

// Drop units not reachable from the main program or the extra roots.
SourceProgram eliminate_dead(SourceProgram p, const std::vector<std::string>& extra_roots = {});

} // namespace farfel
