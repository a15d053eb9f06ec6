#pragma once

#include "farfel/ast.hpp"

#include <memory>
#include <string>
#include <vector>

namespace farfel {

// Fortran implicit typing: explicit declarations win, otherwise first letter
// I-N means integer. Fills var_types/externals on every unit (implicitly
// declared variables are bound at the top-level unit of their nest).
SourceProgram infer_types(SourceProgram p);

NumType implicit_type(const std::string& name);

struct ScopeInfo {
    std::string name;                      // unit name as written
    std::vector<std::string> path;         // ancestor unit names, outermost first
    const Subprogram* unit = nullptr;
    ScopeInfo* parent = nullptr;
    std::vector<std::unique_ptr<ScopeInfo>> children;

    std::vector<std::string> params;
    std::set<std::string> locals;          // bound here (decls, result var, hoisted implicits)
    std::set<std::string> externals;       // EXTERNAL-declared here
    std::vector<std::string> free_vars;    // deterministic (sorted) order

    bool binds(const std::string& n) const {
        return locals.count(n) || externals.count(n) ||
               std::find(params.begin(), params.end(), n) != params.end();
    }
    const ScopeInfo* find_child(const std::string& n) const {
        for (const auto& c : children)
            if (c->name == n) return c.get();
        return nullptr;
    }
};

struct ScopeTree {
    std::vector<std::unique_ptr<ScopeInfo>> roots;
    const ScopeInfo* find_root(const std::string& name) const {
        for (const auto& r : roots)
            if (r->name == name) return r.get();
        return nullptr;
    }
};

// Requires a typed program. Classifies every identifier, computes free
// variables of nested subprograms, rejects unresolved references,
// assignments to free variables from nested subprograms, and
// subprogram/variable name collisions.
ScopeTree resolve_scopes(const SourceProgram& p);

struct CallEdge {
    std::string caller;
    std::string callee;
    int site_id = 0;
    bool through_param = false;  // callee is an external parameter of the caller
};

struct ExternalFlow {
    std::string caller;
    std::string callee;
    int param_pos = 0;              // 1-based position in the callee
    bool named_subprogram = false;  // else: external parameter of the caller
    std::string arg;
};

struct CallGraph {
    std::set<std::string> nodes;
    std::vector<CallEdge> edges;
    std::vector<ExternalFlow> flows;
};

// Errors on call arity mismatches against known signatures.
CallGraph build_call_graph(const SourceProgram& p, const ScopeTree& scopes);

std::set<std::string> reachable(const CallGraph& g, const std::vector<std::string>& roots);

// Deterministic textual edge list, one "CALLER -> CALLEE [pos=K kind=...]" per line, sorted.
std::string render_call_graph(const CallGraph& g);

} // namespace farfel
