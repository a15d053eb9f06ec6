#include "farfel/adengine.hpp"

#include "farfel/diag.hpp"

#include <algorithm>
#include <functional>

namespace farfel {

namespace {

NumType letter_type(const std::string& n) {
    char c = n.empty() ? 'X' : n[0];
    return (c >= 'I' && c <= 'N') ? NumType::Integer : NumType::Real;
}

NumType type_in(const Subprogram& u, const std::string& n) {
    auto it = u.var_types.find(n);
    return it != u.var_types.end() ? it->second : letter_type(n);
}

bool is_real_var(const Subprogram& u, const std::string& n) {
    return !u.declared_external(n) && type_in(u, n) == NumType::Real;
}

Expr zero() { return Expr::make_int(0); }
bool is_zero(const Expr& e) { return e.kind == Expr::Kind::Const && e.value == 0.0; }
bool is_one(const Expr& e) { return e.kind == Expr::Kind::Const && e.value == 1.0; }

Expr mk_add(Expr a, Expr b) {
    if (is_zero(a)) return b;
    if (is_zero(b)) return a;
    return Expr::make_bin("+", std::move(a), std::move(b));
}
Expr mk_neg(Expr a) {
    if (is_zero(a)) return zero();
    Expr n;
    n.kind = Expr::Kind::Negate;
    n.args.push_back(std::move(a));
    return n;
}
Expr mk_sub(Expr a, Expr b) {
    if (is_zero(b)) return a;
    if (is_zero(a)) return mk_neg(std::move(b));
    return Expr::make_bin("-", std::move(a), std::move(b));
}
Expr mk_mul(Expr a, Expr b) {
    if (is_zero(a) || is_zero(b)) return zero();
    if (is_one(a)) return b;
    if (is_one(b)) return a;
    return Expr::make_bin("*", std::move(a), std::move(b));
}
Expr mk_div(Expr a, Expr b) {
    if (is_zero(a)) return zero();
    return Expr::make_bin("/", std::move(a), std::move(b));
}

Expr compare(const char* op, Expr a, Expr b) {
    Expr c;
    c.kind = Expr::Kind::Compare;
    c.op = op;
    c.args.push_back(std::move(a));
    c.args.push_back(std::move(b));
    return c;
}

bool is_active_unit(const Subprogram& u) {
    if (u.kind == Subprogram::Kind::Function && type_in(u, u.name) == NumType::Real) return true;
    for (const auto& p : u.params)
        if (is_real_var(u, p)) return true;
    return false;
}

struct Engine {
    SourceProgram& prog;
    int suffix;
    ToolStyle style;
    bool reverse_mode;
    int next_label = 9000;

    std::string dname(const std::string& base) const {
        return derived_unit_name(base, suffix, style);
    }
    std::string dvar(const std::string& v) const { return derived_var_name(v, suffix, style); }

    // the unit being generated; recursive transforms never touch it
    Subprogram* gen = nullptr;
    int t_counter = 0, n_counter = 0, ic_counter = 0, ir_counter = 0;

    std::string fresh(const char* prefix, int& counter, NumType t) {
        std::string name;
        do {
            name = std::string(prefix) + std::to_string(++counter);
        } while (gen->var_types.count(name) || gen->declared_external(name) ||
                 std::find(gen->params.begin(), gen->params.end(), name) != gen->params.end());
        gen->var_types[name] = t;
        return name;
    }
    std::vector<std::string> created_reals;
    std::string real_tmp() {
        std::string t = fresh("T", t_counter, NumType::Real);
        created_reals.push_back(t);
        return t;
    }

    std::string transform(const std::string& base_name) {
        std::string out_name = dname(base_name);
        if (prog.find_unit(out_name)) return out_name;
        const Subprogram* base_ptr = prog.find_unit(base_name);
        if (!base_ptr)
            throw CompileError("adengine", "derivative of unknown subprogram " + base_name +
                                               " requested (stage ordering violation)");
        Subprogram src = *base_ptr;  // the unit vector may reallocate under us
        for (const auto& pn : src.params)
            if (src.declared_external(pn))
                throw CompileError("adengine", "cannot differentiate " + base_name +
                                                   ": it takes an EXTERNAL parameter (plan bug)");

        Subprogram d;
        d.kind = Subprogram::Kind::Subroutine;
        d.name = out_name;
        d.line = src.line;
        d.var_types = src.var_types;
        for (const auto& pn : src.params) {
            d.params.push_back(pn);
            if (is_real_var(src, pn)) {
                d.params.push_back(dvar(pn));
                d.var_types[dvar(pn)] = NumType::Real;
            }
        }
        bool fn = src.kind == Subprogram::Kind::Function;
        if (fn) {
            d.params.push_back(src.name);
            if (is_real_var(src, src.name)) {
                d.params.push_back(dvar(src.name));
                d.var_types[dvar(src.name)] = NumType::Real;
            }
        }

        Subprogram* outer_gen = gen;
        int ot = t_counter, on = n_counter, oic = ic_counter, oir = ir_counter;
        std::vector<std::string> outer_tmps = std::move(created_reals);
        gen = &d;
        t_counter = n_counter = ic_counter = ir_counter = 0;
        created_reals.clear();

        // the primal's real variables, before any companions exist
        std::vector<std::string> primal_reals;
        for (const auto& [vn, vt] : src.var_types)
            if (vt == NumType::Real) primal_reals.push_back(vn);

        std::vector<Statement> body = src.body;
        flatten_calls(src, body, fn ? src.name : "");
        for (const auto& t : created_reals) primal_reals.push_back(t);

        // register a companion for every primal real; locals get zero-initialized
        // cotangents in reverse mode
        std::set<std::string> params_set(d.params.begin(), d.params.end());
        std::vector<std::string> local_bars;
        for (const auto& vn : primal_reals) {
            std::string bar = dvar(vn);
            if (params_set.count(bar)) continue;
            if (!d.var_types.count(bar)) d.var_types[bar] = NumType::Real;
            local_bars.push_back(bar);
        }
        std::sort(local_bars.begin(), local_bars.end());
        local_bars.erase(std::unique(local_bars.begin(), local_bars.end()), local_bars.end());

        std::vector<Statement> out_body;
        if (!reverse_mode) {
            for (const Statement& st : body) fwd_stmt(src, st, out_body);
        } else {
            std::vector<Statement> fwd;
            std::vector<std::vector<Statement>> rev;
            for (const Statement& st : body) rev_stmt(src, st, fwd, rev);
            out_body = std::move(fwd);
            for (const auto& bar : local_bars)
                out_body.push_back(mk_assign(bar, zero(), src.line));
            for (auto git = rev.rbegin(); git != rev.rend(); ++git)
                for (auto& s : *git) out_body.push_back(std::move(s));
        }
        d.body = std::move(out_body);

        gen = outer_gen;
        t_counter = ot;
        n_counter = on;
        ic_counter = oic;
        ir_counter = oir;
        created_reals = std::move(outer_tmps);
        prog.units.push_back(std::move(d));
        return out_name;
    }

    static Statement mk_assign(const std::string& lhs, Expr rhs, int line) {
        Statement st;
        st.kind = Statement::Kind::Assign;
        st.lhs = lhs;
        st.rhs = std::move(rhs);
        st.line = line;
        return st;
    }

    static Statement tape_op(const char* op, const std::string& var, int line) {
        Statement st;
        st.kind = Statement::Kind::Call;
        st.callee = op;
        st.args.push_back(Expr::make_var(var));
        st.line = line;
        return st;
    }

    // --- hoist unit calls out of expressions ---

    void flatten_calls(const Subprogram& u, std::vector<Statement>& body,
                       const std::string& result_var) {
        std::vector<Statement> out;
        for (Statement st : body) {
            flatten_calls(u, st.body, result_var);
            flatten_calls(u, st.else_body, result_var);
            switch (st.kind) {
            case Statement::Kind::Assign:
                st.rhs = hoist(u, st.rhs, out, /*keep_top_call=*/true);
                break;
            case Statement::Kind::Call:
                for (Expr& a : st.args) {
                    a = hoist(u, a, out, false);
                    if (reverse_mode && a.kind != Expr::Kind::Var) {
                        std::string t = real_tmp();
                        out.push_back(mk_assign(t, a, st.line));
                        a = Expr::make_var(t);
                    }
                }
                break;
            case Statement::Kind::IfLogical:
            case Statement::Kind::IfBlock:
                st.cond = hoist(u, st.cond, out, false);
                break;
            case Statement::Kind::DoLoop:
                st.do_from = hoist(u, st.do_from, out, false);
                st.do_to = hoist(u, st.do_to, out, false);
                if (st.has_step) st.do_step = hoist(u, st.do_step, out, false);
                break;
            case Statement::Kind::Print:
            case Statement::Kind::Read:
                throw CompileError("adengine", "I/O inside differentiated code", st.line);
            case Statement::Kind::AdBlock:
                throw CompileError("adengine", "AD block survived lowering", st.line);
            default:
                break;
            }
            out.push_back(std::move(st));
        }
        body = std::move(out);
    }

    Expr hoist(const Subprogram& u, const Expr& e, std::vector<Statement>& out,
               bool keep_top_call) {
        Expr c = e;
        for (Expr& a : c.args) a = hoist(u, a, out, false);
        if (c.kind == Expr::Kind::Call && !keep_top_call) {
            std::string t = real_tmp();
            out.push_back(mk_assign(t, c, e.line));
            return Expr::make_var(t);
        }
        return c;
    }

    // --- tangent/partial expressions ---

    Expr sign_of(const Expr& a, std::vector<Statement>& prep) {
        std::string sg = real_tmp();
        prep.push_back(mk_assign(sg, Expr::make_real(1.0), a.line));
        Statement lt;
        lt.kind = Statement::Kind::IfLogical;
        lt.cond = compare(".LT.", a, Expr::make_real(0.0));
        lt.body.push_back(mk_assign(sg, Expr::make_real(-1.0), a.line));
        prep.push_back(std::move(lt));
        Statement eq;
        eq.kind = Statement::Kind::IfLogical;
        eq.cond = compare(".EQ.", a, Expr::make_real(0.0));
        eq.body.push_back(mk_assign(sg, Expr::make_real(0.0), a.line));
        prep.push_back(std::move(eq));
        return Expr::make_var(sg);
    }

    // directional derivative of e; dvar_of names the tangent of a variable
    // (returns 0-expressions for passive variables)
    Expr deriv_expr(const Subprogram& u, const Expr& e, std::vector<Statement>& prep,
                    const std::function<Expr(const std::string&)>& dvar_of) {
        switch (e.kind) {
        case Expr::Kind::Const:
            return zero();
        case Expr::Kind::Var:
            if (is_real_var(u, e.name)) return dvar_of(e.name);
            return zero();
        case Expr::Kind::Negate:
            return mk_neg(deriv_expr(u, e.args[0], prep, dvar_of));
        case Expr::Kind::Binop: {
            const Expr& a = e.args[0];
            const Expr& b = e.args[1];
            if (e.op == "+")
                return mk_add(deriv_expr(u, a, prep, dvar_of), deriv_expr(u, b, prep, dvar_of));
            if (e.op == "-")
                return mk_sub(deriv_expr(u, a, prep, dvar_of), deriv_expr(u, b, prep, dvar_of));
            if (e.op == "*")
                return mk_add(mk_mul(deriv_expr(u, a, prep, dvar_of), b),
                              mk_mul(a, deriv_expr(u, b, prep, dvar_of)));
            if (e.op == "/")
                return mk_div(mk_sub(deriv_expr(u, a, prep, dvar_of),
                                     mk_mul(Expr::make_bin("/", a, b),
                                            deriv_expr(u, b, prep, dvar_of))),
                              b);
            if (!(b.kind == Expr::Kind::Const && b.int_literal))
                throw CompileError("adengine",
                                   "** with a non-constant exponent is outside the supported subset",
                                   e.line);
            long n = static_cast<long>(b.value);
            Expr du = deriv_expr(u, a, prep, dvar_of);
            if (n == 0 || is_zero(du)) return zero();
            Expr power = n == 1 ? Expr::make_int(1)
                                : (n == 2 ? a : Expr::make_bin("**", a, Expr::make_int(n - 1)));
            return mk_mul(mk_mul(Expr::make_int(n), power), du);
        }
        case Expr::Kind::Compare:
            throw CompileError("adengine", "comparison in differentiated expression", e.line);
        case Expr::Kind::Intrinsic: {
            const Expr& a = e.args[0];
            Expr du = deriv_expr(u, a, prep, dvar_of);
            if (is_zero(du)) return zero();
            if (e.name == "SIN") return mk_mul(Expr::make_call("COS", {a}), du);
            if (e.name == "COS") return mk_neg(mk_mul(Expr::make_call("SIN", {a}), du));
            if (e.name == "EXP") return mk_mul(Expr::make_call("EXP", {a}), du);
            if (e.name == "LOG") return mk_div(du, a);
            if (e.name == "SQRT")
                return mk_div(du, mk_mul(Expr::make_real(2.0), Expr::make_call("SQRT", {a})));
            return mk_mul(sign_of(a, prep), du);  // ABS; 0 at 0
        }
        case Expr::Kind::Call:
            throw CompileError("adengine", "unhoisted call in differentiated expression", e.line);
        }
        return zero();
    }

    Expr tangent(const Subprogram& u, const Expr& e, std::vector<Statement>& prep) {
        return deriv_expr(u, e, prep,
                          [&](const std::string& v) { return Expr::make_var(dvar(v)); });
    }

    Expr partial(const Subprogram& u, const Expr& e, const std::string& wrt,
                 std::vector<Statement>& prep) {
        return deriv_expr(u, e, prep, [&](const std::string& v) {
            return v == wrt ? Expr::make_int(1) : zero();
        });
    }

    // --- forward mode ---

    void fwd_stmt(const Subprogram& u, const Statement& st, std::vector<Statement>& out) {
        switch (st.kind) {
        case Statement::Kind::Assign: {
            if (st.rhs.kind == Expr::Kind::Call) {
                fwd_call(u, st.callee, st.rhs.args, st.line, st.label, out, &st.lhs, st.rhs.name);
                return;
            }
            if (is_real_var(u, st.lhs)) {
                std::vector<Statement> prep;
                Expr dt = tangent(u, st.rhs, prep);
                for (auto& s : prep) out.push_back(std::move(s));
                Statement ts = mk_assign(dvar(st.lhs), std::move(dt), st.line);
                ts.label = st.label;
                out.push_back(std::move(ts));
                Statement ps = st;
                ps.label = 0;
                out.push_back(std::move(ps));
                return;
            }
            out.push_back(st);
            return;
        }
        case Statement::Kind::Call:
            fwd_call(u, st.callee, st.args, st.line, st.label, out, nullptr, "");
            return;
        case Statement::Kind::IfLogical:
        case Statement::Kind::IfBlock: {
            Statement is;
            is.kind = Statement::Kind::IfBlock;
            is.cond = st.cond;
            is.line = st.line;
            is.label = st.label;
            for (const Statement& inner : st.body) fwd_stmt(u, inner, is.body);
            for (const Statement& inner : st.else_body) fwd_stmt(u, inner, is.else_body);
            if (st.kind == Statement::Kind::IfLogical && is.body.size() == 1 &&
                is.else_body.empty()) {
                Statement il;
                il.kind = Statement::Kind::IfLogical;
                il.cond = st.cond;
                il.line = st.line;
                il.label = st.label;
                il.body = std::move(is.body);
                out.push_back(std::move(il));
            } else {
                out.push_back(std::move(is));
            }
            return;
        }
        case Statement::Kind::DoLoop: {
            Statement ds = st;
            ds.body.clear();
            for (const Statement& inner : st.body) fwd_stmt(u, inner, ds.body);
            seal_do(ds);
            out.push_back(std::move(ds));
            return;
        }
        default:
            out.push_back(st);
            return;
        }
    }

    // one call, statement or hoisted function form
    void fwd_call(const Subprogram& u, const std::string& stmt_callee, const std::vector<Expr>& args,
                  int line, int label, std::vector<Statement>& out, const std::string* result_lhs,
                  const std::string& fn_callee) {
        std::string callee_name = result_lhs ? fn_callee : stmt_callee;
        const Subprogram* callee_ptr = prog.find_unit(callee_name);
        if (!callee_ptr) {
            if (u.declared_external(callee_name))
                throw CompileError("adengine",
                                   "call through EXTERNAL " + callee_name +
                                       " in differentiated code (plan bug)",
                                   line);
            throw CompileError("adengine", "call to unknown subprogram " + callee_name, line);
        }
        Subprogram callee = *callee_ptr;
        bool active = is_active_unit(callee) && (!result_lhs || is_real_var(u, *result_lhs));
        if (!active) {
            if (result_lhs) {
                Statement ps = mk_assign(*result_lhs, Expr::make_call(callee_name, args), line);
                ps.label = label;
                out.push_back(std::move(ps));
            } else {
                Statement ps;
                ps.kind = Statement::Kind::Call;
                ps.callee = callee_name;
                ps.args = args;
                ps.line = line;
                ps.label = label;
                out.push_back(std::move(ps));
            }
            return;
        }
        std::string dn = transform(callee_name);
        Statement cs;
        cs.kind = Statement::Kind::Call;
        cs.callee = dn;
        cs.line = line;
        cs.label = label;
        std::vector<Statement> prep;
        for (size_t i = 0; i < args.size(); ++i) {
            const Expr& a = args[i];
            cs.args.push_back(a);
            if (i >= callee.params.size() || !is_real_var(callee, callee.params[i])) continue;
            if (a.kind == Expr::Kind::Var && is_real_var(u, a.name))
                cs.args.push_back(Expr::make_var(dvar(a.name)));
            else
                cs.args.push_back(tangent(u, a, prep));
        }
        if (result_lhs) {
            cs.args.push_back(Expr::make_var(*result_lhs));
            cs.args.push_back(Expr::make_var(dvar(*result_lhs)));
        }
        for (auto& s : prep) {
            s.label = cs.label ? 0 : s.label;
            out.push_back(std::move(s));
        }
        out.push_back(std::move(cs));
    }

    // --- reverse mode ---

    void rev_stmt(const Subprogram& u, const Statement& st, std::vector<Statement>& fwd,
                  std::vector<std::vector<Statement>>& rev) {
        switch (st.kind) {
        case Statement::Kind::Assign: {
            if (st.rhs.kind == Expr::Kind::Call) {
                rev_call(u, st, fwd, rev, /*as_function=*/true);
                return;
            }
            fwd.push_back(tape_op("TPUSH", st.lhs, st.line));
            fwd.push_back(st);

            std::vector<Statement> r;
            r.push_back(tape_op("TPOP", st.lhs, st.line));
            if (is_real_var(u, st.lhs)) {
                std::string vb = real_tmp();
                r.push_back(mk_assign(vb, Expr::make_var(dvar(st.lhs)), st.line));
                r.push_back(mk_assign(dvar(st.lhs), zero(), st.line));
                std::vector<std::string> vars;
                for_each_subexpr(st.rhs, [&](const Expr& e) {
                    if (e.kind == Expr::Kind::Var && is_real_var(u, e.name) &&
                        std::find(vars.begin(), vars.end(), e.name) == vars.end())
                        vars.push_back(e.name);
                });
                for (const auto& vn : vars) {
                    std::vector<Statement> prep;
                    Expr part = partial(u, st.rhs, vn, prep);
                    for (auto& s : prep) r.push_back(std::move(s));
                    r.push_back(mk_assign(dvar(vn),
                                          mk_add(Expr::make_var(dvar(vn)),
                                                 mk_mul(std::move(part), Expr::make_var(vb))),
                                          st.line));
                }
            }
            rev.push_back(std::move(r));
            return;
        }
        case Statement::Kind::Call:
            rev_call(u, st, fwd, rev, /*as_function=*/false);
            return;
        case Statement::Kind::IfLogical:
        case Statement::Kind::IfBlock: {
            std::string flag = fresh("IC", ic_counter, NumType::Integer);
            fwd.push_back(mk_assign(flag, Expr::make_int(0), st.line));
            Statement set;
            set.kind = Statement::Kind::IfLogical;
            set.cond = st.cond;
            set.line = st.line;
            set.body.push_back(mk_assign(flag, Expr::make_int(1), st.line));
            fwd.push_back(std::move(set));

            Statement fif;
            fif.kind = Statement::Kind::IfBlock;
            fif.line = st.line;
            fif.cond = compare(".EQ.", Expr::make_var(flag), Expr::make_int(1));
            std::vector<std::vector<Statement>> rthen, relse;
            for (const Statement& inner : st.body) rev_stmt(u, inner, fif.body, rthen);
            for (const Statement& inner : st.else_body) rev_stmt(u, inner, fif.else_body, relse);
            fwd.push_back(std::move(fif));
            fwd.push_back(tape_op("TPUSH", flag, st.line));

            std::vector<Statement> r;
            r.push_back(tape_op("TPOP", flag, st.line));
            Statement rif;
            rif.kind = Statement::Kind::IfBlock;
            rif.line = st.line;
            rif.cond = compare(".EQ.", Expr::make_var(flag), Expr::make_int(1));
            for (auto git = rthen.rbegin(); git != rthen.rend(); ++git)
                for (auto& s : *git) rif.body.push_back(std::move(s));
            for (auto git = relse.rbegin(); git != relse.rend(); ++git)
                for (auto& s : *git) rif.else_body.push_back(std::move(s));
            r.push_back(std::move(rif));
            rev.push_back(std::move(r));
            return;
        }
        case Statement::Kind::DoLoop: {
            if (type_in(u, st.do_var) != NumType::Integer)
                throw CompileError("adengine", "non-integer DO variable in differentiated code",
                                   st.line);
            std::string nt = fresh("N", n_counter, NumType::Integer);
            std::string fst = fresh("N", n_counter, NumType::Integer);
            std::string stp = fresh("N", n_counter, NumType::Integer);
            fwd.push_back(mk_assign(fst, st.do_from, st.line));
            fwd.push_back(mk_assign(stp, st.has_step ? st.do_step : Expr::make_int(1), st.line));
            fwd.push_back(mk_assign(nt,
                                    Expr::make_bin("/",
                                                   mk_add(mk_sub(st.do_to, Expr::make_var(fst)),
                                                          Expr::make_var(stp)),
                                                   Expr::make_var(stp)),
                                    st.line));
            Statement clamp;
            clamp.kind = Statement::Kind::IfLogical;
            clamp.line = st.line;
            clamp.cond = compare(".LT.", Expr::make_var(nt), Expr::make_int(0));
            clamp.body.push_back(mk_assign(nt, Expr::make_int(0), st.line));
            fwd.push_back(std::move(clamp));
            fwd.push_back(tape_op("TPUSH", st.do_var, st.line));

            Statement fdo = st;
            fdo.do_from = Expr::make_var(fst);
            fdo.do_to = mk_add(Expr::make_var(fst),
                               mk_mul(mk_sub(Expr::make_var(nt), Expr::make_int(1)),
                                      Expr::make_var(stp)));
            fdo.do_step = Expr::make_var(stp);
            fdo.has_step = true;
            fdo.body.clear();
            std::vector<std::vector<Statement>> rbody;
            for (const Statement& inner : st.body) rev_stmt(u, inner, fdo.body, rbody);
            seal_do(fdo);
            fwd.push_back(std::move(fdo));

            std::vector<Statement> r;
            std::string ir = fresh("IR", ir_counter, NumType::Integer);
            Statement rdo;
            rdo.kind = Statement::Kind::DoLoop;
            rdo.line = st.line;
            rdo.do_var = ir;
            rdo.do_from = Expr::make_int(1);
            rdo.do_to = Expr::make_var(nt);
            rdo.body.push_back(mk_assign(
                st.do_var,
                mk_add(Expr::make_var(fst),
                       mk_mul(mk_sub(Expr::make_var(nt), Expr::make_var(ir)), Expr::make_var(stp))),
                st.line));
            for (auto git = rbody.rbegin(); git != rbody.rend(); ++git)
                for (auto& s : *git) rdo.body.push_back(std::move(s));
            seal_do(rdo);
            r.push_back(std::move(rdo));
            r.push_back(tape_op("TPOP", st.do_var, st.line));
            rev.push_back(std::move(r));
            return;
        }
        case Statement::Kind::Continue:
            fwd.push_back(st);
            rev.push_back({});
            return;
        case Statement::Kind::Return:
            throw CompileError("adengine", "RETURN inside a reverse-differentiated subroutine",
                               st.line);
        default:
            throw CompileError("adengine", "statement outside the reverse subset", st.line);
        }
    }

    void rev_call(const Subprogram& u, const Statement& st, std::vector<Statement>& fwd,
                  std::vector<std::vector<Statement>>& rev, bool as_function) {
        std::string callee_name = as_function ? st.rhs.name : st.callee;
        const std::vector<Expr>& args = as_function ? st.rhs.args : st.args;
        const Subprogram* callee_ptr = prog.find_unit(callee_name);
        if (!callee_ptr) {
            if (u.declared_external(callee_name))
                throw CompileError("adengine",
                                   "call through EXTERNAL " + callee_name +
                                       " in differentiated code (plan bug)",
                                   st.line);
            throw CompileError("adengine", "call to unknown subprogram " + callee_name, st.line);
        }
        Subprogram callee = *callee_ptr;
        if (!is_active_unit(callee)) {
            fwd.push_back(st);
            rev.push_back({});
            return;
        }
        std::vector<std::string> saved;
        for (const Expr& a : args)
            if (a.kind == Expr::Kind::Var && is_real_var(u, a.name)) saved.push_back(a.name);
        if (as_function) saved.push_back(st.lhs);
        for (const auto& v : saved) fwd.push_back(tape_op("TPUSH", v, st.line));
        fwd.push_back(st);

        std::string dn = transform(callee_name);
        std::vector<Statement> r;
        for (auto it = saved.rbegin(); it != saved.rend(); ++it)
            r.push_back(tape_op("TPOP", *it, st.line));
        Statement adj;
        adj.kind = Statement::Kind::Call;
        adj.callee = dn;
        adj.line = st.line;
        for (size_t i = 0; i < args.size(); ++i) {
            const Expr& a = args[i];
            adj.args.push_back(a);
            if (i >= callee.params.size() || !is_real_var(callee, callee.params[i])) continue;
            if (a.kind != Expr::Kind::Var || !is_real_var(u, a.name))
                throw CompileError("adengine", "non-variable active argument in reverse mode",
                                   st.line);
            adj.args.push_back(Expr::make_var(dvar(a.name)));
        }
        if (as_function) {
            adj.args.push_back(Expr::make_var(st.lhs));
            adj.args.push_back(Expr::make_var(dvar(st.lhs)));
        }
        r.push_back(std::move(adj));
        rev.push_back(std::move(r));
    }

    void seal_do(Statement& d) {
        if (d.do_end_label == 0) d.do_end_label = next_label++;
        if (!d.body.empty() && d.body.back().label == d.do_end_label) return;
        for (auto& s : d.body)
            if (s.label == d.do_end_label) s.label = 0;
        Statement cont;
        cont.kind = Statement::Kind::Continue;
        cont.label = d.do_end_label;
        d.body.push_back(std::move(cont));
    }
};

} // namespace

std::string forward_transform(SourceProgram& p, const std::string& unit, int k, ToolStyle style) {
    Engine e{p, k, style, /*reverse_mode=*/false};
    return e.transform(unit);
}

std::string reverse_transform(SourceProgram& p, const std::string& unit, int k, ToolStyle style) {
    Engine e{p, k, style, /*reverse_mode=*/true};
    return e.transform(unit);
}

void transform_stage(SourceProgram& p, const ADPlan& plan, size_t index, ToolStyle style) {
    if (index >= plan.stages.size())
        throw CompileError("adengine", "no such stage " + std::to_string(index));
    const ADStage& s = plan.stages[index];
    if (p.find_unit(derived_unit_name(s.target, s.block_id, style)))
        throw CompileError("adengine", "stage " + std::to_string(index + 1) +
                                           " already applied (duplicate suffix " + s.suffix + ")");
    if (s.forward) forward_transform(p, s.target, s.block_id, style);
    else reverse_transform(p, s.target, s.block_id, style);
}

} // namespace farfel
