#include "farfel/render.hpp"

#include <charconv>
#include <cstdio>

namespace farfel {

namespace {

// precedence for minimal parenthesization
int prec(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::Compare: return 1;
    case Expr::Kind::Binop:
        if (e.op == "+" || e.op == "-") return 2;
        if (e.op == "*" || e.op == "/") return 3;
        return 5;  // **
    case Expr::Kind::Negate: return 4;
    default: return 6;
    }
}

void render_expr_into(const Expr& e, std::string& out);

void child(const Expr& parent, const Expr& c, bool right, std::string& out) {
    int pp = prec(parent), cp = prec(c);
    bool need = cp < pp;
    if (cp == pp) {
        // left-assoc operators need parens on an equal-precedence right child
        // for - and /; ** is right-assoc so the left child needs them.
        if (parent.kind == Expr::Kind::Binop) {
            if (parent.op == "**") need = !right;
            else if (right && (parent.op == "-" || parent.op == "/")) need = true;
        }
    }
    // -(-x) and x**-y style: negate under ** right side keeps parens
    if (parent.kind == Expr::Kind::Binop && parent.op == "**" && right &&
        c.kind == Expr::Kind::Negate)
        need = true;
    if (need) out.push_back('(');
    render_expr_into(c, out);
    if (need) out.push_back(')');
}

void render_expr_into(const Expr& e, std::string& out) {
    switch (e.kind) {
    case Expr::Kind::Const:
        if (e.int_literal) out += std::to_string(static_cast<long>(e.value));
        else out += format_real(e.value);
        break;
    case Expr::Kind::Var:
        out += e.name;
        break;
    case Expr::Kind::Negate:
        out.push_back('-');
        child(e, e.args[0], false, out);
        break;
    case Expr::Kind::Binop:
    case Expr::Kind::Compare:
        child(e, e.args[0], false, out);
        out += e.op;
        child(e, e.args[1], true, out);
        break;
    case Expr::Kind::Intrinsic:
    case Expr::Kind::Call: {
        out += e.name;
        out.push_back('(');
        for (size_t i = 0; i < e.args.size(); ++i) {
            if (i) out += ", ";
            render_expr_into(e.args[i], out);
        }
        out.push_back(')');
        break;
    }
    }
}

// Emit one logical statement line, splitting at 72 columns on commas/blanks.
void emit_line(std::string& out, int label, int indent, const std::string& text) {
    std::string head;
    if (label > 0) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%5d ", label);
        head = buf;
        if (indent > 6) head += std::string(indent - 6, ' ');
    } else {
        head = std::string(indent, ' ');
    }
    std::string line = head + text;
    while (line.size() > 72) {
        size_t cut = line.rfind(',', 71);
        if (cut == std::string::npos || cut < head.size()) cut = 71;
        out += line.substr(0, cut + 1);
        out.push_back('\n');
        line = "     +" + line.substr(cut + 1);
    }
    out += line;
    out.push_back('\n');
}

void render_stmt_into(const Statement& st, int depth, std::string& out);

void render_body(const std::vector<Statement>& body, int depth, std::string& out) {
    for (const Statement& st : body) render_stmt_into(st, depth, out);
}

void render_stmt_into(const Statement& st, int depth, std::string& out) {
    int indent = 6 + 2 * depth;
    std::string t;
    switch (st.kind) {
    case Statement::Kind::Assign:
        t = st.lhs + " = ";
        render_expr_into(st.rhs, t);
        emit_line(out, st.label, indent, t);
        break;
    case Statement::Kind::Call: {
        t = "CALL " + st.callee + "(";
        for (size_t i = 0; i < st.args.size(); ++i) {
            if (i) t += ", ";
            render_expr_into(st.args[i], t);
        }
        t += ")";
        emit_line(out, st.label, indent, t);
        break;
    }
    case Statement::Kind::IfLogical: {
        t = "IF (";
        render_expr_into(st.cond, t);
        t += ") ";
        std::string inner;
        render_stmt_into(st.body[0], 0, inner);
        // strip the 6-space indent and trailing newline of the inner statement
        size_t nb = inner.find_first_not_of(' ');
        if (!inner.empty() && inner.back() == '\n') inner.pop_back();
        t += inner.substr(nb);
        emit_line(out, st.label, indent, t);
        break;
    }
    case Statement::Kind::IfBlock: {
        t = "IF (";
        render_expr_into(st.cond, t);
        t += ") THEN";
        emit_line(out, st.label, indent, t);
        render_body(st.body, depth, out);
        if (!st.else_body.empty()) {
            emit_line(out, 0, indent, "ELSE");
            render_body(st.else_body, depth, out);
        }
        emit_line(out, 0, indent, "END IF");
        break;
    }
    case Statement::Kind::DoLoop: {
        t = "DO " + std::to_string(st.do_end_label) + " " + st.do_var + " = ";
        render_expr_into(st.do_from, t);
        t += ", ";
        render_expr_into(st.do_to, t);
        if (st.has_step) {
            t += ", ";
            render_expr_into(st.do_step, t);
        }
        emit_line(out, st.label, indent, t);
        render_body(st.body, depth, out);
        break;
    }
    case Statement::Kind::Continue:
        emit_line(out, st.label, indent, "CONTINUE");
        break;
    case Statement::Kind::Return:
        emit_line(out, st.label, indent, "RETURN");
        break;
    case Statement::Kind::Read: {
        t = "READ ";
        for (size_t i = 0; i < st.read_vars.size(); ++i) {
            if (i) t += ", ";
            t += st.read_vars[i];
        }
        emit_line(out, st.label, indent, t);
        break;
    }
    case Statement::Kind::Print: {
        t = "PRINT ";
        for (size_t i = 0; i < st.print_args.size(); ++i) {
            if (i) t += ", ";
            render_expr_into(st.print_args[i], t);
        }
        emit_line(out, st.label, indent, t);
        break;
    }
    case Statement::Kind::AdBlock: {
        const char* kw = st.ad_forward ? "ADF" : "ADR";
        const char* seed = st.ad_forward ? "TANGENT" : "COTANGENT";
        t = std::string(kw) + "(";
        for (size_t i = 0; i < st.opens.size(); ++i) {
            if (i) t += ", ";
            t += std::string(seed) + "(" + st.opens[i].var + ") = ";
            render_expr_into(st.opens[i].expr, t);
        }
        t += ")";
        emit_line(out, st.label, indent, t);
        render_body(st.body, depth, out);
        t = std::string("END ") + kw + "(";
        for (size_t i = 0; i < st.closes.size(); ++i) {
            if (i) t += ", ";
            t += st.closes[i].dest + " = " + seed + "(" + st.closes[i].src + ")";
        }
        t += ")";
        emit_line(out, 0, indent, t);
        break;
    }
    }
}

} // namespace

std::string format_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, p);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    // to_chars uses 'e'; keep upper case to match the lexer's normal form
    for (char& c : s)
        if (c == 'e') c = 'E';
    return s;
}

std::string render_expr(const Expr& e) {
    std::string s;
    render_expr_into(e, s);
    return s;
}

std::string render_statement(const Statement& st, int depth) {
    std::string s;
    render_stmt_into(st, depth, s);
    return s;
}

std::string unit_header(const Subprogram& u) {
    std::string t;
    switch (u.kind) {
    case Subprogram::Kind::Main: return "PROGRAM " + u.name;
    case Subprogram::Kind::Function: t = "FUNCTION "; break;
    case Subprogram::Kind::Subroutine: t = "SUBROUTINE "; break;
    }
    t += u.name;
    t += "(";
    for (size_t i = 0; i < u.params.size(); ++i) {
        if (i) t += ", ";
        t += u.params[i];
    }
    t += ")";
    return t;
}

std::string render_unit(const Subprogram& u, int depth) {
    int indent = 6 + 2 * depth;
    std::string out;
    emit_line(out, 0, indent, unit_header(u));
    for (const Declaration& d : u.decls) {
        std::string t = d.kind == Declaration::Kind::External
                            ? "EXTERNAL "
                            : (d.type == NumType::Real ? "REAL " : "INTEGER ");
        for (size_t i = 0; i < d.names.size(); ++i) {
            if (i) t += ", ";
            t += d.names[i];
        }
        emit_line(out, 0, indent, t);
    }
    for (const Subprogram& n : u.nested) out += render_unit(n, depth + 1);
    render_body(u.body, depth, out);
    emit_line(out, 0, indent, "END");
    return out;
}

std::string render(const SourceProgram& p) {
    std::string out;
    for (size_t i = 0; i < p.units.size(); ++i) {
        if (i) out.push_back('\n');
        out += render_unit(p.units[i], 0);
    }
    return out;
}

} // namespace farfel
