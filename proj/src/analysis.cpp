#include "farfel/analysis.hpp"

#include "farfel/diag.hpp"

#include <algorithm>
#include <map>

namespace farfel {

NumType implicit_type(const std::string& name) {
    char c = name.empty() ? 'X' : name[0];
    return (c >= 'I' && c <= 'N') ? NumType::Integer : NumType::Real;
}

namespace {

// Names a statement reads or writes, in categories the passes care about.
struct NameUses {
    std::vector<std::pair<std::string, int>> reads;    // var refs incl. call targets that may be vars
    std::vector<std::pair<std::string, int>> writes;   // assign lhs, READ targets, DO vars, close dests
    std::vector<std::pair<std::string, int>> callees;  // call/intrinsic names
};

void collect_expr(const Expr& e, NameUses& u) {
    switch (e.kind) {
    case Expr::Kind::Var:
        u.reads.push_back({e.name, e.line});
        break;
    case Expr::Kind::Call:
    case Expr::Kind::Intrinsic:
        u.callees.push_back({e.name, e.line});
        for (const Expr& a : e.args) collect_expr(a, u);
        return;
    default:
        break;
    }
    for (const Expr& a : e.args) collect_expr(a, u);
}

void collect_stmt(const Statement& st, NameUses& u) {
    switch (st.kind) {
    case Statement::Kind::Assign:
        u.writes.push_back({st.lhs, st.line});
        collect_expr(st.rhs, u);
        break;
    case Statement::Kind::Call:
        u.callees.push_back({st.callee, st.line});
        for (const Expr& a : st.args) collect_expr(a, u);
        break;
    case Statement::Kind::Read:
        for (const auto& v : st.read_vars) u.writes.push_back({v, st.line});
        break;
    case Statement::Kind::Print:
        for (const Expr& a : st.print_args) collect_expr(a, u);
        break;
    case Statement::Kind::DoLoop:
        u.writes.push_back({st.do_var, st.line});
        collect_expr(st.do_from, u);
        collect_expr(st.do_to, u);
        if (st.has_step) collect_expr(st.do_step, u);
        break;
    case Statement::Kind::IfLogical:
    case Statement::Kind::IfBlock:
        collect_expr(st.cond, u);
        break;
    case Statement::Kind::AdBlock:
        for (const auto& s : st.opens) {
            u.reads.push_back({s.var, s.line});
            collect_expr(s.expr, u);
        }
        for (const auto& x : st.closes) {
            u.writes.push_back({x.dest, x.line});
            u.reads.push_back({x.src, x.line});
        }
        break;
    default:
        break;
    }
}

NameUses collect_uses(const std::vector<Statement>& body) {
    NameUses u;
    for_each_statement(body, [&u](const Statement& st) { collect_stmt(st, u); });
    return u;
}

// --- typing ---

struct TypeScope {
    Subprogram* unit;
    TypeScope* parent;
    std::map<std::string, NumType> explicit_types;
    std::set<std::string> explicit_names;
    std::set<std::string> externals;
    std::set<std::string> params;
    std::set<std::string> child_names;
    std::string result_var;  // function name, empty otherwise

    bool binds_var(const std::string& n) const {
        return params.count(n) || explicit_names.count(n) || n == result_var;
    }
};

void build_type_scope(Subprogram& u, TypeScope* parent, std::vector<std::unique_ptr<TypeScope>>& all,
                      TypeScope** out) {
    auto ts = std::make_unique<TypeScope>();
    ts->unit = &u;
    ts->parent = parent;
    for (const auto& p : u.params) ts->params.insert(p);
    if (u.kind == Subprogram::Kind::Function) ts->result_var = u.name;
    for (const Declaration& d : u.decls) {
        for (const std::string& n : d.names) {
            if (d.kind == Declaration::Kind::External) {
                if (!ts->externals.insert(n).second)
                    throw CompileError("typing", n + " declared EXTERNAL twice in " + u.name, d.line);
            } else {
                auto it = ts->explicit_types.find(n);
                if (it != ts->explicit_types.end() && it->second != d.type)
                    throw CompileError("typing", "conflicting declarations for " + n + " in " + u.name,
                                       d.line);
                ts->explicit_types[n] = d.type;
                ts->explicit_names.insert(n);
            }
        }
    }
    for (auto& nested : u.nested) ts->child_names.insert(nested.name);
    TypeScope* self = ts.get();
    all.push_back(std::move(ts));
    if (out) *out = self;
    for (auto& nested : u.nested) build_type_scope(nested, self, all, nullptr);
}

} // namespace

SourceProgram infer_types(SourceProgram p) {
    std::set<std::string> top_names;
    for (auto& u : p.units) top_names.insert(u.name);

    std::vector<std::unique_ptr<TypeScope>> scopes;
    for (auto& u : p.units) build_type_scope(u, nullptr, scopes, nullptr);

    auto type_of_binding = [](TypeScope* s, const std::string& n) {
        auto it = s->explicit_types.find(n);
        return it != s->explicit_types.end() ? it->second : implicit_type(n);
    };

    // Seed each unit with the types of its own bindings.
    for (auto& sp : scopes) {
        Subprogram& u = *sp->unit;
        u.externals = sp->externals;
        for (const auto& pn : u.params)
            if (!sp->externals.count(pn)) u.var_types[pn] = type_of_binding(sp.get(), pn);
        for (const auto& n : sp->explicit_names)
            u.var_types[n] = sp->explicit_types[n];
        if (!sp->result_var.empty())
            u.var_types[sp->result_var] = type_of_binding(sp.get(), sp->result_var);
    }

    // Hoist implicitly declared variables to the top-level unit of the nest.
    // Written names first: an assigned name is a variable even when it
    // shadows a subprogram name.
    for (auto& sp : scopes) {
        NameUses uses = collect_uses(sp->unit->body);
        std::vector<std::tuple<std::string, int, bool>> names;
        for (const auto& [n, line] : uses.writes) names.push_back({n, line, true});
        for (const auto& [n, line] : uses.reads) names.push_back({n, line, false});
        for (const auto& [n, line, written] : names) {
            (void)line;
            bool resolved = false;
            TypeScope* top = sp.get();
            for (TypeScope* s = sp.get(); s; s = s->parent) {
                top = s;
                if (s->binds_var(n) || s->externals.count(n) || s->child_names.count(n)) {
                    resolved = true;
                    break;
                }
            }
            if (!resolved && !written && (top_names.count(n) || is_intrinsic(n))) resolved = true;
            if (!resolved) {
                Subprogram& root = *top->unit;
                if (!root.var_types.count(n)) root.var_types[n] = implicit_type(n);
                top->explicit_names.insert(n);  // now bound at the top-level unit
                top->explicit_types.emplace(n, root.var_types[n]);
            }
        }
    }
    return p;
}

// --- scopes and free variables ---

namespace {

struct ScopeBuilder {
    const SourceProgram& prog;
    std::set<std::string> top_names;

    explicit ScopeBuilder(const SourceProgram& p) : prog(p) {
        for (auto& u : p.units) top_names.insert(u.name);
    }

    std::unique_ptr<ScopeInfo> build(const Subprogram& u, ScopeInfo* parent,
                                     std::vector<std::string> path) {
        auto s = std::make_unique<ScopeInfo>();
        s->name = u.name;
        s->unit = &u;
        s->parent = parent;
        s->path = path;
        s->params = u.params;
        s->externals = u.externals;
        for (const auto& [n, t] : u.var_types)
            if (std::find(u.params.begin(), u.params.end(), n) == u.params.end())
                s->locals.insert(n);
        // name collisions: a nested unit name shadowing a variable binding here
        for (const auto& nested : u.nested) {
            if (s->binds(nested.name))
                throw CompileError("analysis",
                                   "name " + nested.name + " is both a variable and a subprogram in " +
                                       u.name,
                                   nested.line);
        }
        path.push_back(u.name);
        for (const auto& nested : u.nested) s->children.push_back(build(nested, s.get(), path));
        return s;
    }

    // Find the nested unit a name refers to, searching innermost-first.
    const ScopeInfo* visible_nested_unit(const ScopeInfo* from, const std::string& n) const {
        for (const ScopeInfo* s = from; s; s = s->parent) {
            if (s->binds(n)) return nullptr;  // variable shadows
            if (const ScopeInfo* c = s->find_child(n)) return c;
        }
        return nullptr;
    }

    // true if the name resolves to a variable binding (returns owning scope)
    const ScopeInfo* binding_scope(const ScopeInfo* from, const std::string& n) const {
        for (const ScopeInfo* s = from; s; s = s->parent) {
            if (s->binds(n)) return s;
            if (s->find_child(n)) return nullptr;  // a unit name
        }
        return nullptr;
    }

    void compute_free(ScopeInfo* s, std::map<const ScopeInfo*, std::vector<std::string>>& memo) {
        for (auto& c : s->children) compute_free(c.get(), memo);

        NameUses uses = collect_uses(s->unit->body);
        std::set<std::string> needed;
        auto consider = [&](const std::string& n, int line, bool callable_position) {
            if (const ScopeInfo* unit = visible_nested_unit(s, n)) {
                for (const std::string& fv : memo.at(unit)) needed.insert(fv);
                return;
            }
            if (binding_scope(s, n)) {
                needed.insert(n);
                return;
            }
            if (top_names.count(n) || is_intrinsic(n)) return;
            (void)callable_position;
            throw CompileError("analysis", "reference to " + n + " with no binding in " + s->name,
                               line);
        };
        for (const auto& [n, line] : uses.reads) consider(n, line, false);
        for (const auto& [n, line] : uses.callees) consider(n, line, true);
        for (const auto& [n, line] : uses.writes) {
            const ScopeInfo* b = binding_scope(s, n);
            if (!b) {
                if (visible_nested_unit(s, n))
                    throw CompileError("analysis", "assignment to subprogram name " + n, line);
                throw CompileError("analysis", "assignment to unresolved name " + n + " in " + s->name,
                                   line);
            }
            if (b != s)
                throw CompileError("analysis",
                                   "nested subprogram " + s->name + " assigns " + n +
                                       " from an enclosing scope (write-back is not supported)",
                                   line);
            needed.insert(n);
        }

        std::vector<std::string> free;
        for (const std::string& n : needed) {
            const ScopeInfo* b = binding_scope(s, n);
            if (b && b != s) free.push_back(n);
        }
        std::sort(free.begin(), free.end());
        s->free_vars = free;
        memo[s] = free;
    }
};

} // namespace

ScopeTree resolve_scopes(const SourceProgram& p) {
    ScopeBuilder b(p);
    ScopeTree tree;
    for (const auto& u : p.units) tree.roots.push_back(b.build(u, nullptr, {}));
    std::map<const ScopeInfo*, std::vector<std::string>> memo;
    for (auto& r : tree.roots) b.compute_free(r.get(), memo);
    return tree;
}

// --- call graph ---

namespace {

void graph_unit(const SourceProgram& p, const ScopeBuilder& b, const ScopeInfo* s, CallGraph& g,
                int& site) {
    auto handle_call = [&](const std::string& callee, const std::vector<Expr>& args, int line) {
        if (is_intrinsic(callee)) return;
        CallEdge e;
        e.caller = s->name;
        e.site_id = site++;
        const ScopeInfo* target = b.visible_nested_unit(s, callee);
        const Subprogram* target_unit = nullptr;
        if (target) {
            e.callee = target->name;
            target_unit = target->unit;
        } else if (b.binding_scope(s, callee)) {
            e.callee = callee;
            e.through_param = true;
        } else if (p.find_unit(callee)) {
            e.callee = callee;
            target_unit = p.find_unit(callee);
        } else {
            throw CompileError("analysis", "call to unknown subprogram " + callee, line);
        }
        if (target_unit && target_unit->params.size() != args.size())
            throw CompileError("analysis",
                               "call to " + callee + " with " + std::to_string(args.size()) +
                                   " arguments; it takes " + std::to_string(target_unit->params.size()),
                               line);
        g.edges.push_back(e);
        // external flows: subprogram-valued arguments
        for (size_t i = 0; i < args.size(); ++i) {
            if (args[i].kind != Expr::Kind::Var) continue;
            const std::string& an = args[i].name;
            ExternalFlow f;
            f.caller = s->name;
            f.callee = e.callee;
            f.param_pos = static_cast<int>(i) + 1;
            f.arg = an;
            const ScopeInfo* bs = b.binding_scope(s, an);
            bool is_param_external =
                bs && bs->externals.count(an) &&
                std::find(bs->params.begin(), bs->params.end(), an) != bs->params.end();
            if (!is_param_external && (b.visible_nested_unit(s, an) || p.find_unit(an))) {
                f.named_subprogram = true;
                g.flows.push_back(f);
            } else if (is_param_external) {
                f.named_subprogram = false;
                g.flows.push_back(f);
            }
        }
    };

    g.nodes.insert(s->name);
    for_each_statement(s->unit->body, [&](const Statement& st) {
        if (st.kind == Statement::Kind::Call) handle_call(st.callee, st.args, st.line);
        for_each_expr_in(st, [&](const Expr& top) {
            for_each_subexpr(top, [&](const Expr& e) {
                if (e.kind == Expr::Kind::Call) handle_call(e.name, e.args, e.line);
            });
        });
    });
    for (const auto& c : s->children) graph_unit(p, b, c.get(), g, site);
}

} // namespace

CallGraph build_call_graph(const SourceProgram& p, const ScopeTree& scopes) {
    CallGraph g;
    ScopeBuilder b(p);
    int site = 0;
    for (const auto& r : scopes.roots) graph_unit(p, b, r.get(), g, site);
    return g;
}

std::set<std::string> reachable(const CallGraph& g, const std::vector<std::string>& roots) {
    std::set<std::string> seen(roots.begin(), roots.end());
    bool changed = true;
    while (changed) {
        changed = false;
        for (const CallEdge& e : g.edges)
            if (seen.count(e.caller) && !e.through_param && seen.insert(e.callee).second)
                changed = true;
        for (const ExternalFlow& f : g.flows)
            if (seen.count(f.caller) && f.named_subprogram && seen.insert(f.arg).second)
                changed = true;
    }
    return seen;
}

std::string render_call_graph(const CallGraph& g) {
    std::vector<std::string> lines;
    for (const CallEdge& e : g.edges) {
        std::string l = e.caller + " -> " + e.callee;
        if (e.through_param) l += " [kind=external-param]";
        lines.push_back(l);
    }
    for (const ExternalFlow& f : g.flows) {
        lines.push_back(f.caller + " -> " + f.callee + " [pos=" + std::to_string(f.param_pos) +
                        " kind=" + (f.named_subprogram ? "named-subprogram " : "external-param ") +
                        f.arg + "]");
    }
    std::sort(lines.begin(), lines.end());
    lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out.push_back('\n');
    }
    return out;
}

} // namespace farfel
