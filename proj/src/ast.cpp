#include "farfel/ast.hpp"

#include <cmath>

namespace farfel {

bool is_intrinsic(const std::string& name) {
    return name == "SIN" || name == "COS" || name == "EXP" || name == "LOG" ||
           name == "SQRT" || name == "ABS";
}

Expr Expr::make_int(long v) {
    Expr e;
    e.kind = Kind::Const;
    e.value = static_cast<double>(v);
    e.int_literal = true;
    return e;
}

Expr Expr::make_real(double v) {
    Expr e;
    e.kind = Kind::Const;
    e.value = v;
    e.int_literal = false;
    return e;
}

Expr Expr::make_var(std::string n) {
    Expr e;
    e.kind = Kind::Var;
    e.name = std::move(n);
    return e;
}

Expr Expr::make_call(std::string n, std::vector<Expr> a) {
    Expr e;
    e.kind = is_intrinsic(n) ? Kind::Intrinsic : Kind::Call;
    e.name = std::move(n);
    e.args = std::move(a);
    return e;
}

Expr Expr::make_bin(std::string o, Expr l, Expr r) {
    Expr e;
    e.kind = Kind::Binop;
    e.op = std::move(o);
    e.args.push_back(std::move(l));
    e.args.push_back(std::move(r));
    return e;
}

Subprogram* SourceProgram::find_unit(const std::string& name) {
    for (auto& u : units)
        if (u.name == name) return &u;
    return nullptr;
}

const Subprogram* SourceProgram::find_unit(const std::string& name) const {
    for (auto& u : units)
        if (u.name == name) return &u;
    return nullptr;
}

const Subprogram* SourceProgram::main_unit() const {
    for (auto& u : units)
        if (u.kind == Subprogram::Kind::Main) return &u;
    return nullptr;
}

bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case Expr::Kind::Const:
        return a.int_literal == b.int_literal && a.value == b.value;
    case Expr::Kind::Var:
        return a.name == b.name;
    default:
        break;
    }
    if (a.name != b.name || a.op != b.op || a.args.size() != b.args.size()) return false;
    for (size_t i = 0; i < a.args.size(); ++i)
        if (!structurally_equal(a.args[i], b.args[i])) return false;
    return true;
}

bool structurally_equal(const Statement& a, const Statement& b) {
    if (a.kind != b.kind || a.label != b.label) return false;
    auto eq_body = [](const std::vector<Statement>& x, const std::vector<Statement>& y) {
        if (x.size() != y.size()) return false;
        for (size_t i = 0; i < x.size(); ++i)
            if (!structurally_equal(x[i], y[i])) return false;
        return true;
    };
    switch (a.kind) {
    case Statement::Kind::Assign:
        return a.lhs == b.lhs && structurally_equal(a.rhs, b.rhs);
    case Statement::Kind::Call: {
        if (a.callee != b.callee || a.args.size() != b.args.size()) return false;
        for (size_t i = 0; i < a.args.size(); ++i)
            if (!structurally_equal(a.args[i], b.args[i])) return false;
        return true;
    }
    case Statement::Kind::IfLogical:
        return structurally_equal(a.cond, b.cond) && eq_body(a.body, b.body);
    case Statement::Kind::IfBlock:
        return structurally_equal(a.cond, b.cond) && eq_body(a.body, b.body) &&
               eq_body(a.else_body, b.else_body);
    case Statement::Kind::DoLoop:
        if (a.do_end_label != b.do_end_label || a.do_var != b.do_var || a.has_step != b.has_step)
            return false;
        if (!structurally_equal(a.do_from, b.do_from) || !structurally_equal(a.do_to, b.do_to))
            return false;
        if (a.has_step && !structurally_equal(a.do_step, b.do_step)) return false;
        return eq_body(a.body, b.body);
    case Statement::Kind::Continue:
    case Statement::Kind::Return:
        return true;
    case Statement::Kind::Read:
        return a.read_vars == b.read_vars;
    case Statement::Kind::Print: {
        if (a.print_args.size() != b.print_args.size()) return false;
        for (size_t i = 0; i < a.print_args.size(); ++i)
            if (!structurally_equal(a.print_args[i], b.print_args[i])) return false;
        return true;
    }
    case Statement::Kind::AdBlock: {
        if (a.ad_forward != b.ad_forward) return false;
        if (a.opens.size() != b.opens.size() || a.closes.size() != b.closes.size()) return false;
        for (size_t i = 0; i < a.opens.size(); ++i)
            if (a.opens[i].var != b.opens[i].var || !structurally_equal(a.opens[i].expr, b.opens[i].expr))
                return false;
        for (size_t i = 0; i < a.closes.size(); ++i)
            if (a.closes[i].dest != b.closes[i].dest || a.closes[i].src != b.closes[i].src)
                return false;
        return eq_body(a.body, b.body);
    }
    }
    return false;
}

bool structurally_equal(const Subprogram& a, const Subprogram& b) {
    if (a.kind != b.kind || a.name != b.name || a.params != b.params) return false;
    if (a.decls.size() != b.decls.size()) return false;
    for (size_t i = 0; i < a.decls.size(); ++i) {
        if (a.decls[i].kind != b.decls[i].kind || a.decls[i].names != b.decls[i].names) return false;
        if (a.decls[i].kind == Declaration::Kind::TypeDecl && a.decls[i].type != b.decls[i].type)
            return false;
    }
    if (a.nested.size() != b.nested.size() || a.body.size() != b.body.size()) return false;
    for (size_t i = 0; i < a.nested.size(); ++i)
        if (!structurally_equal(a.nested[i], b.nested[i])) return false;
    for (size_t i = 0; i < a.body.size(); ++i)
        if (!structurally_equal(a.body[i], b.body[i])) return false;
    return true;
}

bool structurally_equal(const SourceProgram& a, const SourceProgram& b) {
    if (a.units.size() != b.units.size()) return false;
    for (size_t i = 0; i < a.units.size(); ++i)
        if (!structurally_equal(a.units[i], b.units[i])) return false;
    return true;
}

void for_each_statement(std::vector<Statement>& body, const std::function<void(Statement&)>& fn) {
    for (Statement& st : body) {
        fn(st);
        for_each_statement(st.body, fn);
        for_each_statement(st.else_body, fn);
    }
}

void for_each_statement(const std::vector<Statement>& body,
                        const std::function<void(const Statement&)>& fn) {
    for (const Statement& st : body) {
        fn(st);
        for_each_statement(st.body, fn);
        for_each_statement(st.else_body, fn);
    }
}

void for_each_subexpr(Expr& e, const std::function<void(Expr&)>& fn) {
    fn(e);
    for (Expr& c : e.args) for_each_subexpr(c, fn);
}

void for_each_subexpr(const Expr& e, const std::function<void(const Expr&)>& fn) {
    fn(e);
    for (const Expr& c : e.args) for_each_subexpr(c, fn);
}

void for_each_expr_in(Statement& st, const std::function<void(Expr&)>& fn) {
    switch (st.kind) {
    case Statement::Kind::Assign: fn(st.rhs); break;
    case Statement::Kind::Call:
        for (Expr& a : st.args) fn(a);
        break;
    case Statement::Kind::IfLogical:
    case Statement::Kind::IfBlock: fn(st.cond); break;
    case Statement::Kind::DoLoop:
        fn(st.do_from);
        fn(st.do_to);
        if (st.has_step) fn(st.do_step);
        break;
    case Statement::Kind::Print:
        for (Expr& a : st.print_args) fn(a);
        break;
    case Statement::Kind::AdBlock:
        for (auto& s : st.opens) fn(s.expr);
        break;
    default: break;
    }
}

void for_each_expr_in(const Statement& st, const std::function<void(const Expr&)>& fn) {
    for_each_expr_in(const_cast<Statement&>(st), [&fn](Expr& e) { fn(e); });
}

} // namespace farfel
