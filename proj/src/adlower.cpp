#include "farfel/adlower.hpp"

#include "farfel/diag.hpp"

#include <algorithm>
#include <functional>

namespace farfel {

std::string derived_unit_name(const std::string& base, int k, ToolStyle style) {
    if (style == ToolStyle::Adifor) return "G" + std::to_string(k) + "_" + base;
    return base + "_G" + std::to_string(k);
}

std::string derived_var_name(const std::string& var, int k, ToolStyle style) {
    if (style == ToolStyle::Adifor) return "G" + std::to_string(k) + "_" + var;
    return var + "_G" + std::to_string(k);
}

namespace {

NumType letter_type(const std::string& n) {
    char c = n.empty() ? 'X' : n[0];
    return (c >= 'I' && c <= 'N') ? NumType::Integer : NumType::Real;
}

NumType type_in(const Subprogram& u, const std::string& n) {
    auto it = u.var_types.find(n);
    return it != u.var_types.end() ? it->second : letter_type(n);
}

// reads/writes of a block body in first-appearance order
struct BlockRefs {
    std::vector<std::string> order;   // every referenced variable, first appearance
    std::set<std::string> reads, writes;
};

void collect_block_refs(const SourceProgram& p, const Subprogram& host,
                        const std::vector<Statement>& body,
                        const std::map<std::string, std::set<size_t>>& assigned, BlockRefs& r) {
    auto is_var = [&](const std::string& n) {
        if (is_intrinsic(n) || n == "TPUSH" || n == "TPOP") return false;
        if (host.var_types.count(n) || host.declared_external(n)) return true;
        return p.find_unit(n) == nullptr;  // unknown: treat as a host variable
    };
    auto touch = [&](const std::string& n, bool write) {
        if (!is_var(n)) return;
        if (std::find(r.order.begin(), r.order.end(), n) == r.order.end()) r.order.push_back(n);
        (write ? r.writes : r.reads).insert(n);
    };
    std::function<void(const Expr&)> expr = [&](const Expr& e) {
        if (e.kind == Expr::Kind::Var) touch(e.name, false);
        if (e.kind == Expr::Kind::Call) {
            // a call through a host external reads that binding
            if (host.declared_external(e.name)) touch(e.name, false);
            for (const Expr& a : e.args) expr(a);
            return;
        }
        for (const Expr& a : e.args) expr(a);
    };
    std::function<void(const std::vector<Statement>&)> walk = [&](const std::vector<Statement>& b) {
        for (const Statement& st : b) {
            switch (st.kind) {
            case Statement::Kind::Assign:
                expr(st.rhs);
                touch(st.lhs, true);
                break;
            case Statement::Kind::Call: {
                const Subprogram* callee = p.find_unit(st.callee);
                if (host.declared_external(st.callee)) touch(st.callee, false);
                for (size_t i = 0; i < st.args.size(); ++i) {
                    const Expr& a = st.args[i];
                    bool written = callee && assigned.count(st.callee) &&
                                   assigned.at(st.callee).count(i);
                    if (a.kind == Expr::Kind::Var) touch(a.name, written);
                    if (a.kind != Expr::Kind::Var || !written) expr(a);
                }
                break;
            }
            case Statement::Kind::IfLogical:
            case Statement::Kind::IfBlock:
                expr(st.cond);
                break;
            case Statement::Kind::DoLoop:
                expr(st.do_from);
                expr(st.do_to);
                if (st.has_step) expr(st.do_step);
                touch(st.do_var, true);
                break;
            case Statement::Kind::Read:
            case Statement::Kind::Print:
                throw CompileError("adlower", "I/O inside an AD block", st.line);
            case Statement::Kind::AdBlock:
                for (const auto& s : st.opens) {
                    touch(s.var, false);
                    expr(s.expr);
                }
                break;
            default:
                break;
            }
            walk(st.body);
            walk(st.else_body);
            if (st.kind == Statement::Kind::AdBlock)
                for (const auto& x : st.closes) {
                    touch(x.src, false);
                    touch(x.dest, true);
                }
        }
    };
    walk(body);
}

struct Canonicalizer {
    SourceProgram& prog;
    std::map<std::string, std::set<size_t>> assigned;
    std::vector<ADBlockDescriptor> blocks;
    int counter = 0;

    void run() {
        const Subprogram* main = prog.main_unit();
        std::set<std::string> live =
            main ? reachable_units(prog, {main->name}) : std::set<std::string>{};
        std::vector<std::string> hosts;
        for (const auto& u : prog.units) {
            if (!live.count(u.name)) continue;
            bool has = false;
            for_each_statement(u.body, [&](const Statement& st) {
                if (st.kind == Statement::Kind::AdBlock) has = true;
            });
            if (has) hosts.push_back(u.name);
        }
        std::sort(hosts.begin(), hosts.end());
        for (const std::string& h : hosts) {
            std::vector<Statement> body = std::move(prog.find_unit(h)->body);
            process(h, body);
            prog.find_unit(h)->body = std::move(body);
        }
    }

    void process(const std::string& host, std::vector<Statement>& body) {
        for (Statement& st : body) {
            process(host, st.body);
            process(host, st.else_body);
            if (st.kind != Statement::Kind::AdBlock) continue;
            canonicalize_block(host, st);
        }
    }

    // introduce the internal parameterless subroutine, then extract it
    void canonicalize_block(const std::string& host_name, Statement& block) {
        if (block.body.empty())
            throw CompileError("adlower", "empty ADF/ADR block", block.line);
        Subprogram& host = *prog.find_unit(host_name);
        const char* kw = block.ad_forward ? "ADF" : "ADR";
        for (const auto& s : block.opens) {
            if (host.declared_external(s.var) || type_in(host, s.var) == NumType::Integer)
                throw CompileError("adlower",
                                   std::string(block.ad_forward ? "TANGENT" : "COTANGENT") +
                                       " applied to non-real variable " + s.var,
                                   s.line);
        }
        for (const auto& x : block.closes) {
            if (host.declared_external(x.src) || type_in(host, x.src) == NumType::Integer)
                throw CompileError("adlower", "non-real tangent source " + x.src, x.line);
            if (host.declared_external(x.dest) || type_in(host, x.dest) == NumType::Integer)
                throw CompileError("adlower", "destination " + x.dest + " is not a writable real",
                                   x.line);
        }

        int id = ++counter;
        std::string inner = std::string(kw) + std::to_string(id);
        std::string extracted = host_name + "_" + inner;

        BlockRefs refs;
        collect_block_refs(prog, host, block.body, assigned, refs);
        std::vector<std::string> inputs, outputs;
        for (const auto& n : refs.order) {
            if (refs.reads.count(n)) inputs.push_back(n);
            else outputs.push_back(n);
        }
        for (const auto& s : block.opens) {
            bool referenced = std::find(refs.order.begin(), refs.order.end(), s.var) !=
                              refs.order.end();
            if (!referenced)
                throw CompileError("adlower",
                                   "active variable " + s.var + " is not used by the " + kw +
                                       " block",
                                   s.line);
        }

        Subprogram sub;
        sub.kind = Subprogram::Kind::Subroutine;
        sub.name = extracted;
        sub.line = block.line;
        sub.params = inputs;
        sub.params.insert(sub.params.end(), outputs.begin(), outputs.end());
        sub.body = std::move(block.body);
        std::vector<std::string> externals;
        for (const auto& n : sub.params) {
            if (host.declared_external(n)) {
                sub.externals.insert(n);
                externals.push_back(n);
            } else {
                sub.var_types[n] = type_in(host, n);
            }
        }
        if (!externals.empty()) {
            Declaration d;
            d.kind = Declaration::Kind::External;
            d.names = externals;
            sub.decls.push_back(d);
        }

        Statement call;
        call.kind = Statement::Kind::Call;
        call.line = block.line;
        call.callee = extracted;
        for (const auto& n : sub.params) call.args.push_back(Expr::make_var(n));
        block.body.clear();
        block.body.push_back(std::move(call));
        block.ad_id = id;

        ADBlockDescriptor d;
        d.block_id = id;
        d.forward = block.ad_forward;
        d.origin_host = host_name;
        d.extracted = extracted;
        d.opens = block.opens;
        d.closes = block.closes;
        d.inputs = std::move(inputs);
        d.outputs = std::move(outputs);
        blocks.push_back(std::move(d));

        prog.units.push_back(std::move(sub));
    }
};

} // namespace

std::vector<ADBlockDescriptor> canonicalize_and_extract(SourceProgram& p, LiftContext& ctx) {
    (void)ctx;  // extracted subroutines carry no closure arguments
    Canonicalizer c{p, assigned_param_positions(p)};
    c.run();
    return std::move(c.blocks);
}

ADPlan plan_stages(const SourceProgram& p, std::vector<ADBlockDescriptor>& blocks) {
    // which unit currently holds each block (nested blocks move on extraction)
    std::map<int, std::string> block_host;
    for (const auto& u : p.units)
        for_each_statement(u.body, [&](const Statement& st) {
            if (st.kind == Statement::Kind::AdBlock && st.ad_id > 0) block_host[st.ad_id] = u.name;
        });

    // dependency: stage s needs stage t when s's call tree contains t's host
    std::map<int, std::set<int>> deps;
    for (const auto& b : blocks) {
        std::set<std::string> tree = reachable_units(p, {b.extracted});
        for (const auto& other : blocks) {
            if (other.block_id == b.block_id) continue;
            auto host = block_host.find(other.block_id);
            if (host != block_host.end() && tree.count(host->second))
                deps[b.block_id].insert(other.block_id);
        }
    }

    // Kahn's algorithm, ready set ordered by target name
    ADPlan plan;
    std::set<int> done;
    std::map<int, int> order_of;
    while (done.size() < blocks.size()) {
        std::vector<const ADBlockDescriptor*> ready;
        for (const auto& b : blocks) {
            if (done.count(b.block_id)) continue;
            bool ok = true;
            for (int d : deps[b.block_id])
                if (!done.count(d)) ok = false;
            if (ok) ready.push_back(&b);
        }
        if (ready.empty())
            throw CompileError("adlower",
                               "cyclic derivative dependency among AD blocks (a subroutine's "
                               "derivative is needed to generate itself)");
        std::sort(ready.begin(), ready.end(),
                  [](const ADBlockDescriptor* a, const ADBlockDescriptor* b) {
                      return a->extracted < b->extracted;
                  });
        const ADBlockDescriptor* b = ready.front();
        ADStage s;
        s.block_id = b->block_id;
        s.forward = b->forward;
        s.target = b->extracted;
        s.suffix = "_G" + std::to_string(b->block_id);
        for (int d : deps[b->block_id]) s.depends.push_back(order_of.at(d));
        std::sort(s.depends.begin(), s.depends.end());
        order_of[b->block_id] = static_cast<int>(plan.stages.size());
        plan.stages.push_back(std::move(s));
        done.insert(b->block_id);
    }
    return plan;
}

namespace {

void register_real(Subprogram& u, const std::string& n) {
    if (!u.var_types.count(n) && !u.declared_external(n)) u.var_types[n] = NumType::Real;
}

std::vector<Statement> rewrite_one(const SourceProgram& p, Subprogram& host, Statement& block,
                                   const ADBlockDescriptor& d, ToolStyle style) {
    const Subprogram* extracted = p.find_unit(d.extracted);
    if (!extracted)
        throw CompileError("adlower", "extracted subroutine " + d.extracted + " disappeared");
    int k = d.block_id;
    auto companion = [&](const std::string& v) { return derived_var_name(v, k, style); };

    std::set<std::string> opens_vars;
    for (const auto& s : d.opens) opens_vars.insert(s.var);
    std::set<std::string> param_set(extracted->params.begin(), extracted->params.end());
    std::set<std::string> output_set;
    for (const auto& o : d.outputs)
        if (param_set.count(o)) output_set.insert(o);

    auto is_active = [&](const std::string& pn) {
        return !extracted->declared_external(pn) && type_in(*extracted, pn) == NumType::Real;
    };

    std::vector<Statement> out;
    auto assign = [&](const std::string& lhs, Expr rhs, int line) {
        Statement st;
        st.kind = Statement::Kind::Assign;
        st.lhs = lhs;
        st.rhs = std::move(rhs);
        st.line = line;
        register_real(host, lhs);
        out.push_back(std::move(st));
    };

    if (d.forward) {
        for (const auto& s : d.opens) {
            if (!param_set.count(s.var))
                throw CompileError("adlower", "seed variable " + s.var + " not used by the block",
                                   s.line);
            assign(companion(s.var), s.expr, s.line);
        }
        // actives not in the opening assignments start with zero tangents
        for (const auto& pn : extracted->params) {
            if (!is_active(pn) || output_set.count(pn) || opens_vars.count(pn)) continue;
            assign(companion(pn), Expr::make_int(0), block.line);
        }
        // tangent destinations: write straight into the close target when possible
        std::map<std::string, std::string> dest_for;
        std::vector<std::pair<std::string, std::string>> post_assigns;
        for (const auto& x : d.closes) {
            if (!param_set.count(x.src))
                throw CompileError("adlower", "tangent source " + x.src + " not set by the block",
                                   x.line);
            if (!dest_for.count(x.src) && !param_set.count(x.dest)) dest_for[x.src] = x.dest;
            else post_assigns.push_back({x.dest, companion(x.src)});
        }
        Statement call;
        call.kind = Statement::Kind::Call;
        call.line = block.line;
        call.callee = derived_unit_name(d.extracted, k, style);
        for (const auto& pn : extracted->params) {
            call.args.push_back(Expr::make_var(pn));
            if (!is_active(pn)) continue;
            std::string comp =
                dest_for.count(pn) ? dest_for[pn] : companion(pn);
            register_real(host, comp);
            call.args.push_back(Expr::make_var(comp));
        }
        out.push_back(std::move(call));
        for (auto& [dst, src] : post_assigns) assign(dst, Expr::make_var(src), block.line);
    } else {
        // primal forward run first: the cotangent seeds are evaluated at the
        // end of the forward phase even though they appear textually prior
        Statement primal;
        primal.kind = Statement::Kind::Call;
        primal.line = block.line;
        primal.callee = d.extracted;
        for (const auto& pn : extracted->params) primal.args.push_back(Expr::make_var(pn));
        out.push_back(std::move(primal));

        auto seed_name = [&](const std::string& v) { return v + "_SEED_G" + std::to_string(k); };
        for (const auto& s : d.opens) {
            if (!param_set.count(s.var))
                throw CompileError("adlower", "seed variable " + s.var + " not set by the block",
                                   s.line);
            assign(seed_name(s.var), s.expr, s.line);
        }
        for (const auto& pn : extracted->params) {
            if (!is_active(pn)) continue;
            if (output_set.count(pn)) {
                if (!opens_vars.count(pn)) assign(seed_name(pn), Expr::make_int(0), block.line);
            } else {
                assign(companion(pn), Expr::make_int(0), block.line);
            }
        }
        Statement call;
        call.kind = Statement::Kind::Call;
        call.line = block.line;
        call.callee = derived_unit_name(d.extracted, k, style);
        for (const auto& pn : extracted->params) {
            call.args.push_back(Expr::make_var(pn));
            if (!is_active(pn)) continue;
            std::string comp = output_set.count(pn) ? seed_name(pn) : companion(pn);
            register_real(host, comp);
            call.args.push_back(Expr::make_var(comp));
        }
        out.push_back(std::move(call));
        for (const auto& x : d.closes) assign(x.dest, Expr::make_var(companion(x.src)), x.line);
    }
    if (!out.empty()) out.front().label = block.label;
    return out;
}

void rewrite_in_body(const SourceProgram& p, Subprogram& host, std::vector<Statement>& body,
                     const std::map<int, const ADBlockDescriptor*>& by_id, ToolStyle style) {
    for (size_t i = 0; i < body.size(); ++i) {
        rewrite_in_body(p, host, body[i].body, by_id, style);
        rewrite_in_body(p, host, body[i].else_body, by_id, style);
        if (body[i].kind != Statement::Kind::AdBlock) continue;
        // blocks in unreachable units were never canonicalized; dead-code
        // elimination removes their hosts right after this pass
        if (body[i].ad_id == 0) continue;
        auto it = by_id.find(body[i].ad_id);
        if (it == by_id.end())
            throw CompileError("adlower", "AD block was never canonicalized", body[i].line);
        std::vector<Statement> repl = rewrite_one(p, host, body[i], *it->second, style);
        body.erase(body.begin() + i);
        body.insert(body.begin() + i, repl.begin(), repl.end());
        i += repl.size() - 1;
    }
}

} // namespace

void rewrite_blocks(SourceProgram& p, const std::vector<ADBlockDescriptor>& blocks,
                    ToolStyle style) {
    std::map<int, const ADBlockDescriptor*> by_id;
    for (const auto& b : blocks) by_id[b.block_id] = &b;
    for (size_t ui = 0; ui < p.units.size(); ++ui) {
        std::vector<Statement> body = std::move(p.units[ui].body);
        rewrite_in_body(p, p.units[ui], body, by_id, style);
        p.units[ui].body = std::move(body);
    }
}

std::string render_plan(const ADPlan& plan) {
    std::string out;
    for (size_t i = 0; i < plan.stages.size(); ++i) {
        const ADStage& s = plan.stages[i];
        out += std::to_string(i + 1) + ": " + (s.forward ? "FORWARD" : "REVERSE") + " " + s.target +
               " " + s.suffix + " depends=[";
        for (size_t j = 0; j < s.depends.size(); ++j) {
            if (j) out += ",";
            out += std::to_string(s.depends[j] + 1);
        }
        out += "]\n";
    }
    return out;
}

std::string render_script(const ADPlan& plan, const std::string& file_stem, ToolStyle style) {
    std::string out = "#! /bin/sh\n";
    std::string acc;  // suffixes of files generated so far
    for (const ADStage& s : plan.stages) {
        std::string root = s.target;
        std::transform(root.begin(), root.end(), root.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        std::string sfx = s.suffix;
        std::transform(sfx.begin(), sfx.end(), sfx.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        std::string files = acc.empty() ? file_stem + ".f" : file_stem + "{," + acc + "}.f";
        if (style == ToolStyle::Tapenade) {
            out += "tapenade -root " + root + (s.forward ? " -d" : " -b") + " -o " + file_stem +
                   " -diffvarname \"" + sfx + "\" -difffuncname \"" + sfx + "\" " + files + "\n";
        } else {
            out += "adifor -root " + root + (s.forward ? " -d" : " -b") + " -o " + file_stem +
                   " -prefix \"" + sfx.substr(1) + "_\" " + files + "\n";
        }
        acc += (acc.empty() ? "" : ",") + sfx;
    }
    return out;
}

} // namespace farfel
