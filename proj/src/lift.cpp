#include "farfel/lift.hpp"

#include "farfel/diag.hpp"

#include <algorithm>
#include <functional>

namespace farfel {

namespace {

NumType letter_type(const std::string& n) {
    char c = n.empty() ? 'X' : n[0];
    return (c >= 'I' && c <= 'N') ? NumType::Integer : NumType::Real;
}

void rename_var_refs(std::vector<Statement>& body, const std::string& from, const std::string& to) {
    for_each_statement(body, [&](Statement& st) {
        if (st.kind == Statement::Kind::Assign && st.lhs == from) st.lhs = to;
        for (auto& v : st.read_vars)
            if (v == from) v = to;
        if (st.kind == Statement::Kind::DoLoop && st.do_var == from) st.do_var = to;
        for (auto& s : st.opens)
            if (s.var == from) s.var = to;
        for (auto& x : st.closes) {
            if (x.dest == from) x.dest = to;
            if (x.src == from) x.src = to;
        }
        for_each_expr_in(st, [&](Expr& top) {
            for_each_subexpr(top, [&](Expr& e) {
                if (e.kind == Expr::Kind::Var && e.name == from) e.name = to;
            });
        });
    });
}

void rename_callee(std::vector<Statement>& body, const std::string& from, const std::string& to) {
    for_each_statement(body, [&](Statement& st) {
        if (st.kind == Statement::Kind::Call && st.callee == from) st.callee = to;
        for_each_expr_in(st, [&](Expr& top) {
            for_each_subexpr(top, [&](Expr& e) {
                if (e.kind == Expr::Kind::Call && e.name == from) e.name = to;
            });
        });
    });
}

// One closure argument accompanying an external at a specialization site.
struct Slot {
    std::string site_name;   // actual at the creating site
    NumType type = NumType::Real;
    bool external = false;
    int merged_param = -1;   // index of the callee's original parameter it merges into
    std::vector<Slot> subs;  // its own closure args, when external
};

struct Binding {
    size_t param_index = 0;
    bool known = false;
    std::string known_name;
    std::vector<Slot> slots;
};

void encode_slots(const std::vector<Slot>& slots, std::string& out) {
    out.push_back('[');
    for (const Slot& s : slots) {
        if (s.merged_param >= 0) out += "m" + std::to_string(s.merged_param);
        else out.push_back(s.external ? 'x' : (s.type == NumType::Integer ? 'i' : 'r'));
        encode_slots(s.subs, out);
    }
    out.push_back(']');
}

std::string encode_key(const std::string& base, const std::vector<Binding>& bindings) {
    std::string k = base;
    for (const Binding& b : bindings) {
        k += "|" + std::to_string(b.param_index) + ":";
        k += b.known ? "K" + b.known_name : "O";
        encode_slots(b.slots, k);
    }
    return k;
}

int unmerged_top_count(const std::vector<Slot>& slots) {
    int n = 0;
    for (const Slot& s : slots)
        if (s.merged_param < 0) ++n;
    return n;
}

struct Rewriter {
    SourceProgram& prog;
    LiftContext& ctx;
    std::map<std::string, std::map<std::string, std::string>> ref_renames;
    // Closure actuals are appended exactly once, during the post-hoist
    // rewrite of each unit; re-rewrites of already-threaded bodies
    // (specialization copies, constant propagation) must not append again.
    bool thread_closures = false;

    bool is_unit(const std::string& n) const { return prog.find_unit(n) != nullptr; }

    const std::vector<std::string>* closure_of(const std::string& n) const {
        auto it = ctx.closure_params.find(n);
        return it == ctx.closure_params.end() ? nullptr : &it->second;
    }

    std::string renamed(const std::string& unit_name, const std::string& n) const {
        auto rn = ref_renames.find(unit_name);
        if (rn == ref_renames.end()) return n;
        auto it = rn->second.find(n);
        return it == rn->second.end() ? n : it->second;
    }

    NumType type_in(const Subprogram& u, const std::string& n) const {
        auto it = u.var_types.find(n);
        return it != u.var_types.end() ? it->second : letter_type(n);
    }

    bool external_in(const Subprogram& u, const std::string& n) const {
        if (u.declared_external(n)) return true;
        return !u.var_types.count(n) && is_unit(n);
    }

    struct BuiltCall {
        std::string callee;
        std::vector<Expr> args;
        std::vector<int> slots;
    };

    // number of top-level arguments when slot args are set aside
    static size_t top_level_count(const std::vector<int>& slots) {
        size_t i = 0, n = 0;
        std::function<void(size_t&)> skip = [&](size_t& at) {
            int k = at < slots.size() ? slots[at] : 0;
            ++at;
            for (int s = 0; s < k; ++s) skip(at);
        };
        while (i < slots.size()) {
            skip(i);
            ++n;
        }
        return n;
    }

    // Expand a plain argument: rename lifted-unit references and append their
    // closure actuals. Arguments already carrying slot metadata are passed
    // through verbatim by the caller.
    void expand_arg(const std::string& unit_name, const Expr& a, std::vector<Expr>& out,
                    std::vector<int>& slots) {
        if (a.kind == Expr::Kind::Var) {
            std::string name = renamed(unit_name, a.name);
            const std::vector<std::string>* clo =
                thread_closures ? closure_of(name) : nullptr;
            if (clo) {
                Expr head = Expr::make_var(name);
                head.line = a.line;
                out.push_back(head);
                slots.push_back(static_cast<int>(clo->size()));
                for (const std::string& c : *clo) {
                    Expr cv = Expr::make_var(c);
                    cv.line = a.line;
                    expand_arg(unit_name, cv, out, slots);
                }
                return;
            }
            Expr v = Expr::make_var(name);
            v.line = a.line;
            out.push_back(v);
            slots.push_back(0);
            return;
        }
        out.push_back(rewrite_expr(unit_name, a, nullptr));
        slots.push_back(0);
    }

    using Threading = std::map<std::string, std::pair<std::vector<std::string>, std::vector<int>>>;

    BuiltCall build_call(const std::string& unit_name, const std::string& callee_in,
                         std::vector<Expr> args_in, std::vector<int> slots_in, int line,
                         const Threading* threading) {
        BuiltCall c;
        c.callee = renamed(unit_name, callee_in);

        // rewrite nested expressions, apply bound-external threading, expand
        // lifted-unit references
        for (size_t i = 0; i < args_in.size(); ++i) {
            int sc = i < slots_in.size() ? slots_in[i] : 0;
            Expr a = std::move(args_in[i]);
            if (sc > 0) {  // already threaded: keep verbatim
                c.args.push_back(std::move(a));
                c.slots.push_back(sc);
                continue;
            }
            if (threading && a.kind == Expr::Kind::Var) {
                auto it = threading->find(a.name);
                if (it != threading->end()) {
                    const auto& [names, counts] = it->second;
                    c.args.push_back(a);
                    c.slots.push_back(static_cast<int>(top_level_count(counts)));
                    for (size_t k = 0; k < names.size(); ++k) {
                        Expr v = Expr::make_var(names[k]);
                        v.line = a.line;
                        c.args.push_back(v);
                        c.slots.push_back(counts[k]);
                    }
                    continue;
                }
            }
            expand_arg(unit_name, a, c.args, c.slots);
        }

        // call through a bound external: its slot actuals join the call
        if (threading) {
            auto it = threading->find(c.callee);
            if (it != threading->end()) {
                const auto& [names, counts] = it->second;
                for (size_t k = 0; k < names.size(); ++k) {
                    Expr v = Expr::make_var(names[k]);
                    v.line = line;
                    c.args.push_back(v);
                    c.slots.push_back(counts[k]);
                }
            }
        }

        // direct call to a lifted unit: append its closure actuals when missing
        const std::vector<std::string>* callee_clo =
            thread_closures ? closure_of(c.callee) : nullptr;
        if (const std::vector<std::string>* clo = callee_clo) {
            const Subprogram* cal = prog.find_unit(c.callee);
            if (cal && top_level_count(c.slots) + clo->size() == cal->params.size()) {
                for (const std::string& cn : *clo) {
                    Expr cv = Expr::make_var(cn);
                    cv.line = line;
                    expand_arg(unit_name, cv, c.args, c.slots);
                }
            }
        }

        maybe_specialize(unit_name, c, line);
        return c;
    }

    void maybe_specialize(const std::string& unit_name, BuiltCall& c, int line) {
        const Subprogram* callee = prog.find_unit(c.callee);
        if (!callee) return;  // external parameter or runtime intrinsic
        size_t nparams = callee->params.size();
        if (c.args.size() == nparams) return;  // complete call
        if (c.args.size() < nparams)
            throw CompileError("lifting",
                               "call to " + c.callee + " has " + std::to_string(c.args.size()) +
                                   " arguments; it takes " + std::to_string(nparams),
                               line);

        // align: one top-level argument per parameter; slot args are surplus
        std::vector<size_t> arg_pos;
        std::vector<std::vector<size_t>> slot_pos(nparams);
        std::function<size_t(size_t)> tail_len = [&](size_t at) -> size_t {
            size_t n = 0;
            int k = c.slots[at];
            size_t j = at + 1;
            for (int s = 0; s < k; ++s) {
                size_t inner = tail_len(j);
                n += 1 + inner;
                j += 1 + inner;
            }
            return n;
        };
        size_t i = 0, p = 0;
        while (i < c.args.size() && p < nparams) {
            arg_pos.push_back(i);
            size_t trailing = tail_len(i);
            for (size_t t = 1; t <= trailing; ++t) slot_pos[p].push_back(i + t);
            i += 1 + trailing;
            ++p;
        }
        if (p != nparams || i != c.args.size())
            throw CompileError("lifting", "cannot align closure arguments in call to " + c.callee,
                               line);

        const Subprogram& caller = *prog.find_unit(unit_name);
        std::vector<Binding> bindings;
        for (size_t q = 0; q < nparams; ++q) {
            if (slot_pos[q].empty()) continue;
            Binding b;
            b.param_index = q;
            const Expr& actual = c.args[arg_pos[q]];
            if (actual.kind == Expr::Kind::Var && is_unit(actual.name) &&
                !caller.var_types.count(actual.name)) {
                b.known = true;
                b.known_name = actual.name;
            }
            size_t cursor = 0;
            b.slots = build_slots(caller, *callee, c, arg_pos, slot_pos[q], cursor,
                                  c.slots[arg_pos[q]]);
            bindings.push_back(std::move(b));
        }

        std::string spec = specialize(c.callee, bindings, line);

        // the rebuilt call is complete: every slot is now an ordinary
        // parameter of the specialization, so no slot metadata remains
        std::vector<Expr> new_args;
        std::vector<int> new_slots;
        size_t bind_at = 0;
        for (size_t q = 0; q < nparams; ++q) {
            new_args.push_back(c.args[arg_pos[q]]);
            new_slots.push_back(0);
            if (bind_at < bindings.size() && bindings[bind_at].param_index == q) {
                const Binding& b = bindings[bind_at];
                size_t cursor = 0;
                emit_unmerged(c, slot_pos[q], b.slots, cursor, new_args, new_slots);
                ++bind_at;
            }
        }
        c.callee = spec;
        c.args = std::move(new_args);
        c.slots = std::move(new_slots);
    }

    void emit_unmerged(const BuiltCall& c, const std::vector<size_t>& positions,
                       const std::vector<Slot>& slots, size_t& cursor, std::vector<Expr>& out,
                       std::vector<int>& out_slots) {
        for (const Slot& s : slots) {
            size_t at = positions[cursor++];
            if (s.merged_param < 0) {
                out.push_back(c.args[at]);
                out_slots.push_back(0);
            }
            emit_unmerged(c, positions, s.subs, cursor, out, out_slots);
        }
    }

    std::vector<Slot> build_slots(const Subprogram& caller, const Subprogram& callee,
                                  const BuiltCall& c, const std::vector<size_t>& arg_pos,
                                  const std::vector<size_t>& positions, size_t& cursor, int count) {
        std::vector<Slot> result;
        for (int k = 0; k < count; ++k) {
            size_t at = positions[cursor++];
            const Expr& a = c.args[at];
            Slot s;
            if (a.kind == Expr::Kind::Var) {
                s.site_name = a.name;
                s.external = external_in(caller, a.name);
                if (!s.external) s.type = type_in(caller, a.name);
                // aliasing rule: do not pass a variable again when
                // the callee already receives it under the same formal name
                for (size_t q = 0; q < callee.params.size(); ++q) {
                    const Expr& orig = c.args[arg_pos[q]];
                    if (orig.kind == Expr::Kind::Var && orig.name == a.name &&
                        callee.params[q] == a.name) {
                        s.merged_param = static_cast<int>(q);
                        break;
                    }
                }
            }
            s.subs = build_slots(caller, callee, c, arg_pos, positions, cursor, c.slots[at]);
            result.push_back(std::move(s));
        }
        return result;
    }

    std::string specialize(const std::string& base_name, const std::vector<Binding>& bindings,
                           int line) {
        std::string key = encode_key(base_name, bindings);
        auto hit = ctx.spec_memo.find(key);
        if (hit != ctx.spec_memo.end()) {
            if (ctx.in_progress.count(key))
                throw CompileError("lifting",
                                   "specialization cycle through " + base_name +
                                       " (recursion is not supported)",
                                   line);
            return hit->second;
        }

        Subprogram spec = *prog.find_unit(base_name);
        int n = ++ctx.spec_counter[base_name];
        std::string new_name = base_name + "_" + std::to_string(n);
        ctx.spec_memo[key] = new_name;
        ctx.in_progress.insert(key);
        ctx.spec_base[new_name] = base_name;

        std::string old_name = spec.name;
        spec.name = new_name;
        if (spec.kind == Subprogram::Kind::Function) {
            auto t = spec.var_types.find(old_name);
            NumType rt = t != spec.var_types.end() ? t->second : letter_type(old_name);
            spec.var_types.erase(old_name);
            spec.var_types[new_name] = rt;
            rename_var_refs(spec.body, old_name, new_name);
        }

        std::set<std::string> taken(spec.params.begin(), spec.params.end());
        taken.insert(spec.name);
        for (const auto& [vn, t] : spec.var_types) taken.insert(vn);
        Threading threading;

        std::vector<std::string> new_params;
        std::vector<std::string> new_externals;
        size_t bind_at = 0;
        for (size_t q = 0; q < spec.params.size(); ++q) {
            new_params.push_back(spec.params[q]);
            if (bind_at < bindings.size() && bindings[bind_at].param_index == q) {
                auto& [names, counts] = threading[spec.params[q]];
                materialize(spec, bindings[bind_at].slots, spec.params[q], taken, new_params,
                            new_externals, names, counts);
                ++bind_at;
            }
        }
        // merged slots refer to original formals by position; patch the names
        for (auto& [ext, tc] : threading) {
            (void)ext;
            (void)tc;
        }
        spec.params = std::move(new_params);
        if (!new_externals.empty()) {
            Declaration d;
            d.kind = Declaration::Kind::External;
            d.names = new_externals;
            spec.decls.push_back(d);
            for (const auto& x : new_externals) spec.externals.insert(x);
        }

        prog.units.push_back(Subprogram{});
        size_t slot_index = prog.units.size() - 1;
        ref_renames[new_name] =
            ref_renames.count(old_name) ? ref_renames[old_name] : std::map<std::string, std::string>{};

        std::vector<Statement> body = std::move(spec.body);
        prog.units[slot_index] = std::move(spec);
        bool outer_mode = thread_closures;
        thread_closures = false;
        rewrite_body(new_name, body, &threading);
        thread_closures = outer_mode;
        prog.find_unit(new_name)->body = std::move(body);

        ctx.in_progress.erase(key);
        return new_name;
    }

    void materialize(Subprogram& spec, const std::vector<Slot>& slots, const std::string& ext_name,
                     std::set<std::string>& taken, std::vector<std::string>& new_params,
                     std::vector<std::string>& new_externals, std::vector<std::string>& names,
                     std::vector<int>& counts) {
        for (const Slot& s : slots) {
            if (s.merged_param >= 0) {
                names.push_back(spec.params[s.merged_param]);
                counts.push_back(unmerged_top_count(s.subs));
            } else {
                std::string formal = s.site_name;
                if (formal.empty() || taken.count(formal)) {
                    int k = 1;
                    while (taken.count(ext_name + std::to_string(k))) ++k;
                    formal = ext_name + std::to_string(k);
                }
                taken.insert(formal);
                new_params.push_back(formal);
                if (s.external) new_externals.push_back(formal);
                else spec.var_types[formal] = s.type;
                names.push_back(formal);
                counts.push_back(unmerged_top_count(s.subs));
            }
            materialize(spec, s.subs, ext_name, taken, new_params, new_externals, names, counts);
        }
    }

    Expr rewrite_expr(const std::string& unit_name, const Expr& e, const Threading* threading) {
        Expr out = e;
        if (e.kind == Expr::Kind::Call) {
            BuiltCall c = build_call(unit_name, e.name, e.args, e.arg_slots, e.line, threading);
            out.name = std::move(c.callee);
            out.args = std::move(c.args);
            out.arg_slots = std::move(c.slots);
            return out;
        }
        for (size_t i = 0; i < out.args.size(); ++i)
            out.args[i] = rewrite_expr(unit_name, out.args[i], threading);
        return out;
    }

    void rewrite_body(const std::string& unit_name, std::vector<Statement>& body,
                      const Threading* threading) {
        for (Statement& st : body) {
            switch (st.kind) {
            case Statement::Kind::Assign:
                st.rhs = rewrite_expr(unit_name, st.rhs, threading);
                break;
            case Statement::Kind::Call: {
                BuiltCall c =
                    build_call(unit_name, st.callee, st.args, st.arg_slots, st.line, threading);
                st.callee = std::move(c.callee);
                st.args = std::move(c.args);
                st.arg_slots = std::move(c.slots);
                break;
            }
            case Statement::Kind::IfLogical:
            case Statement::Kind::IfBlock:
                st.cond = rewrite_expr(unit_name, st.cond, threading);
                break;
            case Statement::Kind::DoLoop:
                st.do_from = rewrite_expr(unit_name, st.do_from, threading);
                st.do_to = rewrite_expr(unit_name, st.do_to, threading);
                if (st.has_step) st.do_step = rewrite_expr(unit_name, st.do_step, threading);
                break;
            case Statement::Kind::Print:
                for (Expr& a : st.print_args) a = rewrite_expr(unit_name, a, threading);
                break;
            case Statement::Kind::AdBlock:
                for (auto& s : st.opens) s.expr = rewrite_expr(unit_name, s.expr, threading);
                break;
            default:
                break;
            }
            rewrite_body(unit_name, st.body, threading);
            rewrite_body(unit_name, st.else_body, threading);
        }
    }
};

// --- hoisting of nested subprograms ---

struct Hoister {
    LiftContext& ctx;
    SourceProgram flat;
    std::map<std::string, std::map<std::string, std::string>> ref_renames;
    std::set<std::string> taken;
    std::map<const ScopeInfo*, std::string> lifted_names;

    std::string fresh(const std::string& want) {
        if (!taken.count(want)) return want;
        int k = 2;
        while (taken.count(want + "_" + std::to_string(k))) ++k;
        return want + "_" + std::to_string(k);
    }

    void name_descendants(const ScopeInfo& s, const std::string& prefix) {
        for (const auto& c : s.children) {
            std::string lifted = fresh(prefix + "_" + c->name);
            taken.insert(lifted);
            lifted_names[c.get()] = lifted;
            name_descendants(*c, lifted);
        }
    }

    std::map<std::string, std::string> visible_renames(const ScopeInfo& s) {
        std::map<std::string, std::string> m;
        for (const ScopeInfo* a = &s; a; a = a->parent)
            for (const auto& c : a->children)
                if (!m.count(c->name)) m[c->name] = lifted_names.at(c.get());
        return m;
    }

    void hoist_top(const Subprogram& u, const ScopeInfo& s) {
        name_descendants(s, u.name);
        Subprogram stripped = u;
        stripped.nested.clear();
        ref_renames[u.name] = visible_renames(s);
        flat.units.push_back(std::move(stripped));
        emit_descendants(u, s);
    }

    void emit_descendants(const Subprogram& u, const ScopeInfo& s) {
        for (size_t i = 0; i < u.nested.size(); ++i) {
            emit_lifted(u.nested[i], *s.children[i]);
            emit_descendants(u.nested[i], *s.children[i]);
        }
    }

    void emit_lifted(const Subprogram& n, const ScopeInfo& ns) {
        Subprogram out = n;
        out.nested.clear();
        std::string new_name = lifted_names.at(&ns);
        std::string old_name = out.name;
        out.name = new_name;
        for (const std::string& fv : ns.free_vars) {
            out.params.push_back(fv);
            const ScopeInfo* owner = nullptr;
            for (const ScopeInfo* a = ns.parent; a; a = a->parent)
                if (a->binds(fv)) {
                    owner = a;
                    break;
                }
            if (owner && owner->externals.count(fv)) out.externals.insert(fv);
            else if (owner) {
                auto it = owner->unit->var_types.find(fv);
                out.var_types[fv] = it != owner->unit->var_types.end() ? it->second : letter_type(fv);
            } else {
                out.var_types[fv] = letter_type(fv);
            }
        }
        std::vector<std::string> undeclared;
        for (const auto& x : out.externals) {
            bool declared = false;
            for (const auto& d : out.decls)
                if (d.kind == Declaration::Kind::External)
                    for (const auto& dn : d.names)
                        if (dn == x) declared = true;
            if (!declared) undeclared.push_back(x);
        }
        if (!undeclared.empty()) {
            Declaration d;
            d.kind = Declaration::Kind::External;
            d.names = undeclared;
            out.decls.push_back(d);
        }
        if (out.kind == Subprogram::Kind::Function) {
            auto t = out.var_types.find(old_name);
            NumType rt = t != out.var_types.end() ? t->second : letter_type(old_name);
            out.var_types.erase(old_name);
            out.var_types[new_name] = rt;
            rename_var_refs(out.body, old_name, new_name);
        }
        ref_renames[new_name] = visible_renames(ns);
        ctx.closure_params[new_name] = ns.free_vars;
        flat.units.push_back(std::move(out));
    }
};

std::set<std::string> collect_reachable(const SourceProgram& p,
                                        const std::vector<std::string>& roots) {
    std::set<std::string> seen;
    std::vector<std::string> work;
    for (const auto& r : roots)
        if (p.find_unit(r) && seen.insert(r).second) work.push_back(r);
    while (!work.empty()) {
        std::string n = work.back();
        work.pop_back();
        const Subprogram* u = p.find_unit(n);
        if (!u) continue;
        auto note = [&](const std::string& m) {
            if (p.find_unit(m) && seen.insert(m).second) work.push_back(m);
        };
        for_each_statement(u->body, [&](const Statement& st) {
            auto scan_args = [&](const std::vector<Expr>& args) {
                for (const Expr& a : args)
                    if (a.kind == Expr::Kind::Var && !u->var_types.count(a.name)) note(a.name);
            };
            if (st.kind == Statement::Kind::Call) {
                note(st.callee);
                scan_args(st.args);
            }
            for_each_expr_in(st, [&](const Expr& top) {
                for_each_subexpr(top, [&](const Expr& e) {
                    if (e.kind == Expr::Kind::Call) {
                        note(e.name);
                        scan_args(e.args);
                    }
                });
            });
        });
    }
    return seen;
}

} // namespace

SourceProgram lift_nested(const SourceProgram& typed, const ScopeTree& scopes, LiftContext& ctx) {
    Hoister h{ctx};
    for (const auto& u : typed.units) h.taken.insert(u.name);
    for (size_t i = 0; i < typed.units.size(); ++i) h.hoist_top(typed.units[i], *scopes.roots[i]);
    h.flat.source_name = typed.source_name;

    SourceProgram prog = std::move(h.flat);
    size_t original_count = prog.units.size();
    Rewriter rw{prog, ctx, std::move(h.ref_renames)};
    rw.thread_closures = true;
    // specializations appended during this loop were rewritten at creation
    for (size_t i = 0; i < original_count; ++i) {
        std::string name = prog.units[i].name;
        std::vector<Statement> body = std::move(prog.units[i].body);
        rw.rewrite_body(name, body, nullptr);
        prog.find_unit(name)->body = std::move(body);
    }
    rw.thread_closures = false;
    return prog;
}

void propagate_external_constants(SourceProgram& p, LiftContext& ctx, size_t min_value_arity) {
    const Subprogram* main = p.main_unit();
    if (!main) return;
    std::string main_name = main->name;
    Rewriter rw{p, ctx, {}};

    bool changed = true;
    while (changed) {
        changed = false;
        std::set<std::string> live = collect_reachable(p, {main_name});

        for (size_t ui = 0; ui < p.units.size() && !changed; ++ui) {
            std::string uname = p.units[ui].name;
            if (!live.count(uname)) continue;
            std::vector<std::string> ext_params;
            for (const auto& pn : p.units[ui].params)
                if (p.units[ui].declared_external(pn)) ext_params.push_back(pn);

            for (const std::string& pn : ext_params) {
                const Subprogram& u0 = *p.find_unit(uname);
                size_t pos = std::find(u0.params.begin(), u0.params.end(), pn) - u0.params.begin();

                std::string bound;
                bool usable = true;
                int sites = 0;
                for (const auto& caller : p.units) {
                    if (!live.count(caller.name)) continue;
                    auto scan_call = [&](const std::string& callee, const std::vector<Expr>& args) {
                        if (callee != uname || pos >= args.size()) return;
                        ++sites;
                        const Expr& a = args[pos];
                        if (a.kind != Expr::Kind::Var || caller.var_types.count(a.name) ||
                            !p.find_unit(a.name)) {
                            usable = false;
                            return;
                        }
                        if (bound.empty()) bound = a.name;
                        else if (bound != a.name) usable = false;
                    };
                    for_each_statement(caller.body, [&](const Statement& st) {
                        if (st.kind == Statement::Kind::Call) scan_call(st.callee, st.args);
                        for_each_expr_in(st, [&](const Expr& top) {
                            for_each_subexpr(top, [&](const Expr& e) {
                                if (e.kind == Expr::Kind::Call) scan_call(e.name, e.args);
                            });
                        });
                    });
                }
                if (sites == 0 || bound.empty()) continue;
                if (!usable) {
                    if (ctx.spec_base.count(uname))
                        throw CompileError("lifting",
                                           "external parameter " + pn + " of specialization " +
                                               uname + " has multiple bindings");
                    continue;
                }
                size_t arity = 0;
                auto cit = ctx.closure_params.find(bound);
                if (cit != ctx.closure_params.end()) arity = cit->second.size();
                if (arity < min_value_arity) continue;

                {
                    Subprogram& u = *p.find_unit(uname);
                    u.params.erase(u.params.begin() + pos);
                    u.externals.erase(pn);
                    for (auto& d : u.decls)
                        if (d.kind == Declaration::Kind::External)
                            d.names.erase(std::remove(d.names.begin(), d.names.end(), pn),
                                          d.names.end());
                    u.decls.erase(std::remove_if(u.decls.begin(), u.decls.end(),
                                                 [](const Declaration& d) { return d.names.empty(); }),
                                  u.decls.end());
                }
                {
                    std::vector<Statement> body = std::move(p.find_unit(uname)->body);
                    rename_var_refs(body, pn, bound);
                    rename_callee(body, pn, bound);
                    rw.rewrite_body(uname, body, nullptr);  // repair arities; may specialize
                    p.find_unit(uname)->body = std::move(body);
                }
                for (auto& caller : p.units) {
                    for_each_statement(caller.body, [&](Statement& st) {
                        auto fix = [&](const std::string& callee, std::vector<Expr>& args,
                                       std::vector<int>& slots) {
                            if (callee != uname || pos >= args.size()) return;
                            args.erase(args.begin() + pos);
                            if (pos < slots.size()) slots.erase(slots.begin() + pos);
                        };
                        if (st.kind == Statement::Kind::Call) fix(st.callee, st.args, st.arg_slots);
                        for_each_expr_in(st, [&](Expr& top) {
                            for_each_subexpr(top, [&](Expr& e) {
                                if (e.kind == Expr::Kind::Call) fix(e.name, e.args, e.arg_slots);
                            });
                        });
                    });
                }
                changed = true;
                break;
            }
        }
    }
}

std::set<std::string> reachable_units(const SourceProgram& p,
                                      const std::vector<std::string>& roots) {
    return collect_reachable(p, roots);
}

SourceProgram eliminate_dead(SourceProgram p, const std::vector<std::string>& extra_roots) {
    const Subprogram* main = p.main_unit();
    std::vector<std::string> roots = extra_roots;
    if (main) roots.push_back(main->name);
    std::set<std::string> live = collect_reachable(p, roots);
    SourceProgram out;
    out.source_name = p.source_name;
    for (auto& u : p.units)
        if (live.count(u.name)) out.units.push_back(std::move(u));
    return out;
}

namespace {
std::set<std::string> units_passed_by_name(const SourceProgram& p) {
    std::set<std::string> passed_units;
    for (const auto& u : p.units)
        for_each_statement(u.body, [&](const Statement& st) {
            auto note = [&](const std::vector<Expr>& args) {
                for (const Expr& a : args)
                    if (a.kind == Expr::Kind::Var && p.find_unit(a.name) &&
                        !u.var_types.count(a.name))
                        passed_units.insert(a.name);
            };
            if (st.kind == Statement::Kind::Call) note(st.args);
            for_each_expr_in(st, [&](const Expr& top) {
                for_each_subexpr(top, [&](const Expr& e) {
                    if (e.kind == Expr::Kind::Call) note(e.args);
                });
            });
        });
    return passed_units;
}
} // namespace

std::map<std::string, std::set<size_t>> assigned_param_positions(const SourceProgram& p) {
    std::map<std::string, std::set<size_t>> assigned;
    std::set<std::string> passed_units = units_passed_by_name(p);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& u : p.units) {
            auto& my = assigned[u.name];
            auto mark = [&](const std::string& n) {
                auto it = std::find(u.params.begin(), u.params.end(), n);
                if (it == u.params.end()) return;
                if (my.insert(static_cast<size_t>(it - u.params.begin())).second) changed = true;
            };
            for_each_statement(u.body, [&](const Statement& st) {
                if (st.kind == Statement::Kind::Assign) mark(st.lhs);
                if (st.kind == Statement::Kind::DoLoop) mark(st.do_var);
                for (const auto& v : st.read_vars) mark(v);
                for (const auto& x : st.closes) mark(x.dest);
                auto flow = [&](const std::string& callee, const std::vector<Expr>& args) {
                    const Subprogram* target = p.find_unit(callee);
                    for (size_t i = 0; i < args.size(); ++i) {
                        if (args[i].kind != Expr::Kind::Var) continue;
                        bool callee_assigns = false;
                        if (target) {
                            callee_assigns = assigned[callee].count(i) != 0;
                        } else {
                            for (const auto& cand : passed_units)
                                if (assigned[cand].count(i)) callee_assigns = true;
                        }
                        if (callee_assigns) mark(args[i].name);
                    }
                };
                if (st.kind == Statement::Kind::Call) flow(st.callee, st.args);
                for_each_expr_in(st, [&](const Expr& top) {
                    for_each_subexpr(top, [&](const Expr& e) {
                        if (e.kind == Expr::Kind::Call) flow(e.name, e.args);
                    });
                });
            });
        }
    }
    return assigned;
}

void check_aliases(const SourceProgram& p) {
    std::map<std::string, std::set<size_t>> assigned = assigned_param_positions(p);
    std::set<std::string> passed_units = units_passed_by_name(p);

    for (const auto& u : p.units) {
        for_each_statement(u.body, [&](const Statement& st) {
            auto check = [&](const std::string& callee, const std::vector<Expr>& args, int line) {
                const Subprogram* target = p.find_unit(callee);
                auto may_assign = [&](size_t q) {
                    if (target) return assigned[callee].count(q) != 0;
                    for (const auto& cand : passed_units)
                        if (assigned[cand].count(q)) return true;
                    return false;
                };
                for (size_t i = 0; i < args.size(); ++i) {
                    if (args[i].kind != Expr::Kind::Var) continue;
                    if (p.find_unit(args[i].name) && !u.var_types.count(args[i].name)) continue;
                    for (size_t j = i + 1; j < args.size(); ++j) {
                        if (args[j].kind != Expr::Kind::Var || args[j].name != args[i].name) continue;
                        if (may_assign(i) || may_assign(j))
                            throw CompileError("lifting",
                                               "variable " + args[i].name + " is passed twice to " +
                                                   callee + " (positions " + std::to_string(i + 1) +
                                                   " and " + std::to_string(j + 1) +
                                                   ") and may be assigned",
                                               line);
                    }
                }
            };
            if (st.kind == Statement::Kind::Call) check(st.callee, st.args, st.line);
            for_each_expr_in(st, [&](const Expr& top) {
                for_each_subexpr(top, [&](const Expr& e) {
                    if (e.kind == Expr::Kind::Call) check(e.name, e.args, e.line);
                });
            });
        });
    }
}

} // namespace farfel
