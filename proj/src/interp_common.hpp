#pragma once

// Internal helpers shared by the standard and reference interpreters.

#include "farfel/ast.hpp"
#include "farfel/diag.hpp"
#include "farfel/interp.hpp"
#include "farfel/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <set>

namespace farfel {
namespace detail {


inline NumType letter_type(const std::string& n) {
    char c = n.empty() ? 'X' : n[0];
    return (c >= 'I' && c <= 'N') ? NumType::Integer : NumType::Real;
}

inline bool is_tape_op(const std::string& n) { return n == "TPUSH" || n == "TPOP"; }

struct UnitLayout {
    std::vector<std::string> names;
    std::map<std::string, int> slot;
    std::vector<NumType> types;
    int result_slot = -1;

    int find(const std::string& n) const {
        auto it = slot.find(n);
        return it == slot.end() ? -1 : it->second;
    }
};

inline UnitLayout build_layout(const Subprogram& u, const SourceProgram& prog,
                               bool include_referenced = true) {
    UnitLayout L;
    auto add = [&](const std::string& n, NumType t) {
        if (L.slot.count(n)) return;
        L.slot[n] = static_cast<int>(L.names.size());
        L.names.push_back(n);
        L.types.push_back(t);
    };
    for (const auto& p : u.params) {
        auto it = u.var_types.find(p);
        add(p, it != u.var_types.end() ? it->second : letter_type(p));
    }
    for (const auto& [n, t] : u.var_types) add(n, t);
    // names introduced by generated code without a var_types entry
    if (include_referenced)
    for_each_statement(u.body, [&](const Statement& st) {
        auto touch = [&](const std::string& n) {
            if (L.slot.count(n) || u.declared_external(n)) return;
            if (is_intrinsic(n) || is_tape_op(n)) return;
            if (prog.find_unit(n)) return;
            add(n, letter_type(n));
        };
        switch (st.kind) {
        case Statement::Kind::Assign: touch(st.lhs); break;
        case Statement::Kind::Read:
            for (const auto& v : st.read_vars) touch(v);
            break;
        case Statement::Kind::DoLoop: touch(st.do_var); break;
        case Statement::Kind::AdBlock:
            for (const auto& s : st.opens) touch(s.var);
            for (const auto& x : st.closes) touch(x.dest);
            break;
        default: break;
        }
        for_each_expr_in(st, [&](const Expr& top) {
            for_each_subexpr(top, [&](const Expr& e) {
                if (e.kind == Expr::Kind::Var) touch(e.name);
            });
        });
    });
    // non-parameter EXTERNAL declarations are markers, not storage
    if (u.kind == Subprogram::Kind::Function) L.result_slot = L.find(u.name);
    return L;
}

// does this loop body ever mention the loop variable?
inline bool mentions_name(const std::vector<Statement>& body, const std::string& n) {
    bool found = false;
    for_each_statement(body, [&](const Statement& st) {
        if (found) return;
        if (st.kind == Statement::Kind::Assign && st.lhs == n) found = true;
        if (st.kind == Statement::Kind::DoLoop && st.do_var == n) found = true;
        for (const auto& v : st.read_vars)
            if (v == n) found = true;
        for (const auto& s : st.opens)
            if (s.var == n) found = true;
        for (const auto& x : st.closes)
            if (x.dest == n || x.src == n) found = true;
        for_each_expr_in(st, [&](const Expr& top) {
            for_each_subexpr(top, [&](const Expr& e) {
                if (e.kind == Expr::Kind::Var && e.name == n) found = true;
            });
        });
    });
    return found;
}

// Units that may perform I/O, directly or through any call. Calls through
// parameters are approximated by the set of units ever passed by name.
inline std::set<std::string> io_impure_units(const SourceProgram& p) {
    std::set<std::string> passed;
    std::map<std::string, std::set<std::string>> calls;
    std::map<std::string, bool> has_param_call;
    std::set<std::string> impure;

    auto unit_names = [&]() {
        std::set<std::string> s;
        for (auto& u : p.units) s.insert(u.name);
        return s;
    }();

    std::function<void(const Subprogram&)> scan = [&](const Subprogram& u) {
        auto& my_calls = calls[u.name];
        bool& pc = has_param_call[u.name];
        for_each_statement(u.body, [&](const Statement& st) {
            if (st.kind == Statement::Kind::Read || st.kind == Statement::Kind::Print)
                impure.insert(u.name);
            auto note_call = [&](const std::string& callee, const std::vector<Expr>& args) {
                if (is_intrinsic(callee) || is_tape_op(callee)) return;
                if (unit_names.count(callee)) my_calls.insert(callee);
                else pc = true;  // nested or through a parameter: be conservative
                for (const Expr& a : args)
                    if (a.kind == Expr::Kind::Var && unit_names.count(a.name)) passed.insert(a.name);
            };
            if (st.kind == Statement::Kind::Call) note_call(st.callee, st.args);
            for_each_expr_in(st, [&](const Expr& top) {
                for_each_subexpr(top, [&](const Expr& e) {
                    if (e.kind == Expr::Kind::Call) note_call(e.name, e.args);
                });
            });
        });
        for (const auto& n : u.nested) {
            scan(n);
            // nested units execute within the parent for this analysis
            my_calls.insert(n.name);
        }
    };
    for (const auto& u : p.units) scan(u);

    bool changed = true;
    while (changed) {
        changed = false;
        bool passed_impure = false;
        for (const auto& n : passed)
            if (impure.count(n)) passed_impure = true;
        for (const auto& [name, cs] : calls) {
            if (impure.count(name)) continue;
            bool bad = false;
            for (const auto& c : cs)
                if (impure.count(c)) bad = true;
            if (has_param_call[name] && passed_impure) bad = true;
            if (bad) {
                impure.insert(name);
                changed = true;
            }
        }
    }
    return impure;
}

struct Snapshot {
    std::vector<Value> vals;
    bool operator==(const Snapshot& o) const {
        if (vals.size() != o.vals.size()) return false;
        for (size_t i = 0; i < vals.size(); ++i) {
            const Value& a = vals[i];
            const Value& b = o.vals[i];
            if (a.tag != b.tag) return false;
            switch (a.tag) {
            case Value::Tag::Real:
                if (a.r != b.r && !(std::isnan(a.r) && std::isnan(b.r))) return false;
                break;
            case Value::Tag::Int:
                if (a.i != b.i) return false;
                break;
            case Value::Tag::Proc:
                if (a.proc != b.proc || a.proc_env != b.proc_env) return false;
                break;
            default: break;
            }
        }
        return true;
    }
};


} // namespace detail
} // namespace farfel
