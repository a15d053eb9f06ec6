#include "farfel/pipeline.hpp"

#include "farfel/adengine.hpp"
#include "farfel/render.hpp"

namespace farfel {

PipelineResult run_pipeline(const SourceProgram& parsed, const PipelineOptions& opt) {
    PipelineResult r;
    r.typed = infer_types(parsed);
    ScopeTree scopes = resolve_scopes(r.typed);
    r.graph = build_call_graph(r.typed, scopes);

    r.specialized = lift_nested(r.typed, scopes, r.ctx);
    check_aliases(r.specialized);

    r.lifted = r.specialized;
    propagate_external_constants(r.lifted, r.ctx, /*min_value_arity=*/1);

    r.canonical = r.lifted;
    r.blocks = canonicalize_and_extract(r.canonical, r.ctx);

    r.prepared = r.canonical;
    propagate_external_constants(r.prepared, r.ctx, /*min_value_arity=*/0);
    r.plan = plan_stages(r.prepared, r.blocks);
    rewrite_blocks(r.prepared, r.blocks, opt.tool_style);
    std::vector<std::string> targets;
    for (const auto& b : r.blocks) targets.push_back(b.extracted);
    r.prepared = eliminate_dead(std::move(r.prepared), targets);

    if (!opt.backend_script && opt.run_engine) {
        r.final_program = r.prepared;
        for (size_t i = 0; i < r.plan.stages.size(); ++i)
            transform_stage(r.final_program, r.plan, i, opt.tool_style);
        r.final_program = eliminate_dead(std::move(r.final_program));
    } else {
        r.final_program = r.prepared;
    }
    return r;
}

namespace {

void dump_expr(const Expr& e, std::string& out) {
    switch (e.kind) {
    case Expr::Kind::Const:
        out += e.int_literal ? std::to_string(static_cast<long>(e.value)) : format_real(e.value);
        return;
    case Expr::Kind::Var:
        out += e.name;
        return;
    case Expr::Kind::Negate:
        out += "(neg ";
        dump_expr(e.args[0], out);
        out += ")";
        return;
    case Expr::Kind::Binop:
    case Expr::Kind::Compare:
        out += "(" + e.op + " ";
        dump_expr(e.args[0], out);
        out += " ";
        dump_expr(e.args[1], out);
        out += ")";
        return;
    case Expr::Kind::Intrinsic:
    case Expr::Kind::Call:
        out += "(" + e.name;
        for (const Expr& a : e.args) {
            out += " ";
            dump_expr(a, out);
        }
        out += ")";
        return;
    }
}

void dump_stmt(const Statement& st, int depth, std::string& out) {
    std::string pad(depth * 2, ' ');
    out += pad;
    if (st.label) out += std::to_string(st.label) + ": ";
    switch (st.kind) {
    case Statement::Kind::Assign:
        out += "(assign " + st.lhs + " ";
        dump_expr(st.rhs, out);
        out += ")\n";
        return;
    case Statement::Kind::Call:
        out += "(call " + st.callee;
        for (const Expr& a : st.args) {
            out += " ";
            dump_expr(a, out);
        }
        out += ")\n";
        return;
    case Statement::Kind::IfLogical:
    case Statement::Kind::IfBlock: {
        out += "(if ";
        dump_expr(st.cond, out);
        out += "\n";
        for (const auto& s : st.body) dump_stmt(s, depth + 1, out);
        if (!st.else_body.empty()) {
            out += pad + " else\n";
            for (const auto& s : st.else_body) dump_stmt(s, depth + 1, out);
        }
        out += pad + ")\n";
        return;
    }
    case Statement::Kind::DoLoop: {
        out += "(do " + st.do_var + " ";
        dump_expr(st.do_from, out);
        out += " ";
        dump_expr(st.do_to, out);
        out += "\n";
        for (const auto& s : st.body) dump_stmt(s, depth + 1, out);
        out += pad + ")\n";
        return;
    }
    case Statement::Kind::Continue:
        out += "(continue)\n";
        return;
    case Statement::Kind::Return:
        out += "(return)\n";
        return;
    case Statement::Kind::Read:
        out += "(read";
        for (const auto& v : st.read_vars) out += " " + v;
        out += ")\n";
        return;
    case Statement::Kind::Print:
        out += "(print";
        for (const Expr& a : st.print_args) {
            out += " ";
            dump_expr(a, out);
        }
        out += ")\n";
        return;
    case Statement::Kind::AdBlock: {
        out += st.ad_forward ? "(adf" : "(adr";
        for (const auto& s : st.opens) {
            out += " (seed " + s.var + " ";
            dump_expr(s.expr, out);
            out += ")";
        }
        out += "\n";
        for (const auto& s : st.body) dump_stmt(s, depth + 1, out);
        out += pad + " closes:";
        for (const auto& x : st.closes) out += " (" + x.dest + " <- " + x.src + ")";
        out += ")\n";
        return;
    }
    }
}

void dump_unit(const Subprogram& u, int depth, std::string& out) {
    std::string pad(depth * 2, ' ');
    const char* k = u.kind == Subprogram::Kind::Main
                        ? "program"
                        : (u.kind == Subprogram::Kind::Function ? "function" : "subroutine");
    out += pad + "(" + k + " " + u.name;
    for (const auto& p : u.params) out += " " + p;
    out += "\n";
    for (const auto& n : u.nested) dump_unit(n, depth + 1, out);
    for (const auto& st : u.body) dump_stmt(st, depth + 1, out);
    out += pad + ")\n";
}

} // namespace

std::string dump_ast(const SourceProgram& p) {
    std::string out;
    for (const auto& u : p.units) dump_unit(u, 0, out);
    return out;
}

} // namespace farfel
