#include "farfel/interp.hpp"

#include "interp_common.hpp"

#include "farfel/diag.hpp"

namespace farfel {

using namespace detail;

namespace {

// Executes nested subprograms directly: frames carry a static link to the
// defining frame and closures capture it. Used as the semantics oracle for
// the lifting pipeline, never in the main pipeline itself.
class RefMachine {
public:
    RefMachine(const SourceProgram& p, const InterpOptions& opt) : prog_(p), opt_(opt) {
        impure_ = io_impure_units(p);
        for (const auto& u : p.units) top_units_[u.name] = &u;
    }

    RunResult run(const std::vector<std::string>& input) {
        input_ = input;
        const Subprogram* main = prog_.main_unit();
        if (!main) throw RuntimeError("program has no main unit");
        call(*main, nullptr, {});
        RunResult r;
        r.output = output_;
        return r;
    }

private:
    struct Frame {
        const Subprogram* unit;
        Frame* static_link;
        const UnitLayout* layout;
        std::vector<Value> storage;
        std::vector<Value*> cells;
        std::vector<Value*> dup_cells;
    };

    struct Proc {
        const Subprogram* unit;
        Frame* env;  // defining frame; null for top-level units
    };

    const SourceProgram& prog_;
    InterpOptions opt_;
    std::set<std::string> impure_;
    std::map<std::string, const Subprogram*> top_units_;
    std::map<const Subprogram*, UnitLayout> layouts_;
    std::vector<Proc> procs_;
    std::vector<std::string> input_;
    size_t input_pos_ = 0;
    std::vector<std::string> output_;
    long steps_ = 0;
    std::map<const Statement*, bool> loop_pure_cache_;

    const UnitLayout& layout_for(const Subprogram& u) {
        auto it = layouts_.find(&u);
        if (it == layouts_.end())
            it = layouts_.emplace(&u, build_layout(u, prog_, /*include_referenced=*/false)).first;
        return it->second;
    }

    double rnd(double v) const {
        return opt_.single_precision ? static_cast<double>(static_cast<float>(v)) : v;
    }

    void step(int line) {
        if (opt_.max_steps && ++steps_ > opt_.max_steps)
            throw RuntimeError("step budget exceeded", line);
    }

    Value make_proc(const Subprogram* u, Frame* env) {
        Value v;
        v.tag = Value::Tag::Proc;
        v.proc = u->name;
        v.proc_env = static_cast<int>(procs_.size());
        procs_.push_back({u, env});
        return v;
    }

    // --- name resolution along the static chain ---

    struct Resolved {
        enum class Kind { Cell, Unit } kind;
        Value** cell_slot = nullptr;   // pointer to the frame's cell pointer
        int slot = -1;
        Frame* frame = nullptr;
        const Subprogram* unit = nullptr;
        Frame* def_env = nullptr;
    };

    bool resolve(const std::string& n, Frame* f, Resolved& out) {
        for (Frame* g = f; g; g = g->static_link) {
            int s = g->layout->find(n);
            if (s >= 0) {
                out.kind = Resolved::Kind::Cell;
                out.frame = g;
                out.slot = s;
                return true;
            }
            for (const auto& nested : g->unit->nested)
                if (nested.name == n) {
                    out.kind = Resolved::Kind::Unit;
                    out.unit = &nested;
                    out.def_env = g;
                    return true;
                }
        }
        auto it = top_units_.find(n);
        if (it != top_units_.end()) {
            out.kind = Resolved::Kind::Unit;
            out.unit = it->second;
            out.def_env = nullptr;
            return true;
        }
        return false;
    }

    Value* cell_of(const Resolved& r) { return r.frame->cells[r.slot]; }

    // --- calling ---

    Value call(const Subprogram& u, Frame* static_link, const std::vector<Value*>& args) {
        if (args.size() != u.params.size())
            throw RuntimeError("call to " + u.name + " with wrong arity");
        Frame f;
        f.unit = &u;
        f.static_link = static_link;
        f.layout = &layout_for(u);
        f.storage.resize(f.layout->names.size());
        f.cells.resize(f.layout->names.size());
        for (size_t i = 0; i < f.cells.size(); ++i) f.cells[i] = &f.storage[i];
        for (size_t i = 0; i < u.params.size(); ++i) f.cells[f.layout->find(u.params[i])] = args[i];
        for (size_t i = 0; i < args.size(); ++i)
            for (size_t j = i + 1; j < args.size(); ++j)
                if (args[i] == args[j]) f.dup_cells.push_back(args[i]);
        exec_body(u.body, f);
        if (u.kind == Subprogram::Kind::Function) {
            Value v = *f.cells[f.layout->result_slot];
            if (v.tag == Value::Tag::Undef)
                throw RuntimeError("function " + u.name + " returned no value");
            return v;
        }
        return Value{};
    }

    Proc resolve_proc(const std::string& name, Frame& f, int line) {
        Resolved r;
        if (!resolve(name, &f, r))
            throw RuntimeError("call to unknown subprogram " + name, line);
        if (r.kind == Resolved::Kind::Unit) return {r.unit, r.def_env};
        Value v = *cell_of(r);
        if (v.tag != Value::Tag::Proc)
            throw RuntimeError(name + " is not callable here", line);
        return {procs_[v.proc_env].unit, procs_[v.proc_env].env};
    }

    std::vector<Value*> bind_args(const std::vector<Expr>& call_args, Frame& f,
                                  std::deque<Value>& temps, int line) {
        std::vector<Value*> out;
        out.reserve(call_args.size());
        for (const Expr& a : call_args) {
            if (a.kind == Expr::Kind::Var) {
                Resolved r;
                if (!resolve(a.name, &f, r))
                    throw RuntimeError("unknown name " + a.name, line);
                if (r.kind == Resolved::Kind::Cell) {
                    out.push_back(cell_of(r));
                    continue;
                }
                temps.push_back(make_proc(r.unit, r.def_env));
                out.push_back(&temps.back());
                continue;
            }
            temps.push_back(eval(a, f));
            out.push_back(&temps.back());
        }
        return out;
    }

    void write_cell(Frame& f, Value* cell, const Value& v, NumType t, int line) {
        if (!f.dup_cells.empty() &&
            std::find(f.dup_cells.begin(), f.dup_cells.end(), cell) != f.dup_cells.end())
            throw RuntimeError("assignment to aliased argument in " + f.unit->name, line);
        if (t == NumType::Integer)
            *cell = Value::integer(v.tag == Value::Tag::Int ? v.i : static_cast<long>(v.r));
        else
            *cell = Value::real(rnd(v.as_real()));
    }

    NumType type_at(const Resolved& r) const { return r.frame->layout->types[r.slot]; }

    bool exec_body(const std::vector<Statement>& body, Frame& f) {
        for (const Statement& st : body)
            if (exec_stmt(st, f)) return true;
        return false;
    }

    bool exec_stmt(const Statement& st, Frame& f) {
        step(st.line);
        switch (st.kind) {
        case Statement::Kind::Assign: {
            Value v = eval(st.rhs, f);
            Resolved r;
            if (!resolve(st.lhs, &f, r) || r.kind != Resolved::Kind::Cell)
                throw RuntimeError("assignment to unknown variable " + st.lhs, st.line);
            write_cell(f, cell_of(r), v, type_at(r), st.line);
            return false;
        }
        case Statement::Kind::Call: {
            Proc p = resolve_proc(st.callee, f, st.line);
            std::deque<Value> temps;
            auto cells = bind_args(st.args, f, temps, st.line);
            call(*p.unit, p.env, cells);
            return false;
        }
        case Statement::Kind::Return:
            return true;
        case Statement::Kind::Continue:
            return false;
        case Statement::Kind::Read: {
            for (const auto& vn : st.read_vars) {
                if (input_pos_ >= input_.size()) throw RuntimeError("READ past end of input", st.line);
                const std::string& text = input_[input_pos_++];
                Resolved r;
                if (!resolve(vn, &f, r) || r.kind != Resolved::Kind::Cell)
                    throw RuntimeError("READ into unknown variable " + vn, st.line);
                Value val = type_at(r) == NumType::Integer
                                ? Value::integer(std::strtol(text.c_str(), nullptr, 10))
                                : Value::real(std::strtod(text.c_str(), nullptr));
                write_cell(f, cell_of(r), val, type_at(r), st.line);
            }
            return false;
        }
        case Statement::Kind::Print:
            for (const Expr& e : st.print_args) output_.push_back(format_value_for_print(eval(e, f)));
            return false;
        case Statement::Kind::IfLogical:
        case Statement::Kind::IfBlock:
            if (truth(st.cond, f)) return exec_body(st.body, f);
            return exec_body(st.else_body, f);
        case Statement::Kind::DoLoop:
            return exec_do(st, f);
        case Statement::Kind::AdBlock:
            return exec_ad_block(st, f);
        }
        return false;
    }

    bool exec_do(const Statement& st, Frame& f) {
        Resolved r;
        if (!resolve(st.do_var, &f, r) || r.kind != Resolved::Kind::Cell)
            throw RuntimeError("unknown DO variable " + st.do_var, st.line);
        NumType vt = type_at(r);
        Value* vcell = cell_of(r);
        Value from = eval(st.do_from, f), to = eval(st.do_to, f);
        Value stepv = st.has_step ? eval(st.do_step, f) : Value::integer(1);
        long trip;
        long istep = 0;
        double dstep = 0;
        if (vt == NumType::Integer) {
            long a = from.tag == Value::Tag::Int ? from.i : static_cast<long>(from.r);
            long b = to.tag == Value::Tag::Int ? to.i : static_cast<long>(to.r);
            istep = stepv.tag == Value::Tag::Int ? stepv.i : static_cast<long>(stepv.r);
            if (istep == 0) throw RuntimeError("DO step is zero", st.line);
            trip = std::max(0L, (b - a + istep) / istep);
            *vcell = Value::integer(a);
        } else {
            double a = from.as_real(), b = to.as_real();
            dstep = stepv.as_real();
            if (dstep == 0) throw RuntimeError("DO step is zero", st.line);
            trip = std::max(0L, static_cast<long>((b - a + dstep) / dstep));
            *vcell = Value::real(a);
        }

        bool shortcut = opt_.loop_shortcut && vt == NumType::Integer && loop_pure(st);
        Snapshot prev1, prev2;
        bool have1 = false, have2 = false;

        for (long k = 0; k < trip; ++k) {
            if (exec_body(st.body, f)) return true;
            if (vt == NumType::Integer)
                *vcell = Value::integer(vcell->i + istep);
            else
                *vcell = Value::real(rnd(vcell->r + dstep));
            if (shortcut) {
                Snapshot snap = snapshot_frame(f, vcell);
                long remaining = trip - (k + 1);
                if (remaining <= 0) break;
                if (have1 && snap == prev1) {
                    *vcell = Value::integer(vcell->i + remaining * istep);
                    break;
                }
                if (have2 && snap == prev2) {
                    if (remaining % 2 == 1) {
                        if (exec_body(st.body, f)) return true;
                        *vcell = Value::integer(vcell->i + istep);
                        remaining -= 1;
                    }
                    *vcell = Value::integer(vcell->i + remaining * istep);
                    break;
                }
                prev2 = std::move(prev1);
                have2 = have1;
                prev1 = std::move(snap);
                have1 = true;
            }
        }
        return false;
    }

    Snapshot snapshot_frame(const Frame& f, const Value* skip) const {
        Snapshot s;
        s.vals.reserve(f.cells.size());
        for (Value* c : f.cells) {
            if (c == skip) continue;
            s.vals.push_back(*c);
        }
        return s;
    }

    bool loop_pure(const Statement& st) {
        auto it = loop_pure_cache_.find(&st);
        if (it != loop_pure_cache_.end()) return it->second;
        bool pure = !mentions_name(st.body, st.do_var);
        if (pure) {
            for_each_statement(st.body, [&](const Statement& s) {
                if (s.kind == Statement::Kind::Read || s.kind == Statement::Kind::Print) pure = false;
                auto chk = [&](const std::string& callee) {
                    if (is_intrinsic(callee) || is_tape_op(callee)) return;
                    // known impure unit, or any call when an impure unit is
                    // ever passed around: be conservative
                    if (impure_.count(callee)) pure = false;
                };
                if (s.kind == Statement::Kind::Call) chk(s.callee);
                for_each_expr_in(s, [&](const Expr& top) {
                    for_each_subexpr(top, [&](const Expr& e) {
                        if (e.kind == Expr::Kind::Call) chk(e.name);
                    });
                });
                // calls through closures: only safe if no passed unit is impure
                if (pure) {
                    bool any_passed_impure = false;
                    for (const auto& imp : impure_)
                        if (passed_units().count(imp)) any_passed_impure = true;
                    if (any_passed_impure) pure = false;
                }
            });
        }
        loop_pure_cache_[&st] = pure;
        return pure;
    }

    const std::set<std::string>& passed_units() {
        if (!passed_built_) {
            std::function<void(const Subprogram&)> scan = [&](const Subprogram& u) {
                for_each_statement(u.body, [&](const Statement& stx) {
                    auto note = [&](const std::vector<Expr>& args) {
                        for (const Expr& a : args)
                            if (a.kind == Expr::Kind::Var) passed_.insert(a.name);
                    };
                    if (stx.kind == Statement::Kind::Call) note(stx.args);
                    for_each_expr_in(stx, [&](const Expr& top) {
                        for_each_subexpr(top, [&](const Expr& e) {
                            if (e.kind == Expr::Kind::Call) note(e.args);
                        });
                    });
                });
                for (const auto& n : u.nested) scan(n);
            };
            for (const auto& u : prog_.units) scan(u);
            passed_built_ = true;
        }
        return passed_;
    }

    // Directional central difference over the block body; the stub makes the
    // reference interpreter usable on programs whose AD blocks have not been
    // lowered. Exact state restore between probe runs.
    bool exec_ad_block(const Statement& st, Frame& f) {
        if (opt_.fd_stub_h <= 0)
            throw RuntimeError("reference interpreter cannot execute AD blocks", st.line);
        if (!st.ad_forward)
            throw RuntimeError("reference FD stub supports ADF blocks only", st.line);
        double h = opt_.fd_stub_h;

        std::vector<std::pair<Value*, double>> seeds;
        for (const auto& s : st.opens) {
            Resolved r;
            if (!resolve(s.var, &f, r) || r.kind != Resolved::Kind::Cell)
                throw RuntimeError("unknown seed variable " + s.var, s.line);
            if (type_at(r) == NumType::Integer)
                throw RuntimeError("TANGENT of integer variable " + s.var, s.line);
            seeds.push_back({cell_of(r), eval(s.expr, f).as_real()});
        }

        // snapshot the static chain, through the cells (aliases restore the
        // originating storage)
        std::vector<std::pair<Value*, Value>> saved;
        for (Frame* g = &f; g; g = g->static_link)
            for (Value* c : g->cells) saved.push_back({c, *c});
        auto restore = [&]() {
            for (auto& [c, v] : saved) *c = v;
        };

        auto probe = [&](double sign) {
            restore();
            for (auto& [cell, sv] : seeds) *cell = Value::real(cell->as_real() + sign * h * sv);
            if (exec_body(st.body, f)) throw RuntimeError("RETURN inside AD block", st.line);
            std::vector<double> outs;
            for (const auto& x : st.closes) {
                Resolved r;
                if (!resolve(x.src, &f, r) || r.kind != Resolved::Kind::Cell)
                    throw RuntimeError("unknown tangent source " + x.src, x.line);
                outs.push_back(cell_of(r)->as_real());
            }
            return outs;
        };

        std::vector<double> plus = probe(+1.0);
        std::vector<double> minus = probe(-1.0);
        restore();
        if (exec_body(st.body, f)) throw RuntimeError("RETURN inside AD block", st.line);

        for (size_t i = 0; i < st.closes.size(); ++i) {
            Resolved r;
            if (!resolve(st.closes[i].dest, &f, r) || r.kind != Resolved::Kind::Cell)
                throw RuntimeError("unknown tangent destination " + st.closes[i].dest,
                                   st.closes[i].line);
            write_cell(f, cell_of(r), Value::real((plus[i] - minus[i]) / (2.0 * h)), type_at(r),
                       st.line);
        }
        return false;
    }

    bool truth(const Expr& e, Frame& f) {
        if (e.kind != Expr::Kind::Compare) throw RuntimeError("condition is not a comparison", e.line);
        double x = eval(e.args[0], f).as_real(), y = eval(e.args[1], f).as_real();
        if (e.op == ".LT.") return x < y;
        if (e.op == ".LE.") return x <= y;
        if (e.op == ".GT.") return x > y;
        if (e.op == ".GE.") return x >= y;
        if (e.op == ".EQ.") return x == y;
        return x != y;
    }

    Value eval(const Expr& e, Frame& f) {
        switch (e.kind) {
        case Expr::Kind::Const:
            return e.int_literal ? Value::integer(static_cast<long>(e.value)) : Value::real(e.value);
        case Expr::Kind::Var: {
            Resolved r;
            if (!resolve(e.name, &f, r) || r.kind != Resolved::Kind::Cell)
                throw RuntimeError("unknown variable " + e.name, e.line);
            Value v = *cell_of(r);
            if (v.tag == Value::Tag::Undef)
                throw RuntimeError("read of undefined variable " + e.name, e.line);
            return v;
        }
        case Expr::Kind::Negate: {
            Value v = eval(e.args[0], f);
            if (v.tag == Value::Tag::Int) return Value::integer(-v.i);
            return Value::real(rnd(-v.as_real()));
        }
        case Expr::Kind::Compare:
            throw RuntimeError("comparison outside IF", e.line);
        case Expr::Kind::Binop: {
            Value a = eval(e.args[0], f), b = eval(e.args[1], f);
            bool ints = a.tag == Value::Tag::Int && b.tag == Value::Tag::Int;
            const std::string& op = e.op;
            if (op == "**") {
                if (ints) {
                    long base = a.i, ex = b.i, rr = 1;
                    if (ex < 0) return Value::integer(base == 1 ? 1 : base == -1 ? (ex % 2 ? -1 : 1) : 0);
                    for (long k = 0; k < ex; ++k) rr *= base;
                    return Value::integer(rr);
                }
                return Value::real(rnd(std::pow(a.as_real(), b.as_real())));
            }
            if (ints) {
                if (op == "+") return Value::integer(a.i + b.i);
                if (op == "-") return Value::integer(a.i - b.i);
                if (op == "*") return Value::integer(a.i * b.i);
                if (b.i == 0) throw RuntimeError("integer division by zero", e.line);
                return Value::integer(a.i / b.i);
            }
            double x = a.as_real(), y = b.as_real();
            if (op == "+") return Value::real(rnd(x + y));
            if (op == "-") return Value::real(rnd(x - y));
            if (op == "*") return Value::real(rnd(x * y));
            if (y == 0.0) throw RuntimeError("division by zero", e.line);
            return Value::real(rnd(x / y));
        }
        case Expr::Kind::Intrinsic: {
            double x = eval(e.args[0], f).as_real();
            const std::string& n = e.name;
            if (n == "SIN") return Value::real(rnd(std::sin(x)));
            if (n == "COS") return Value::real(rnd(std::cos(x)));
            if (n == "EXP") return Value::real(rnd(std::exp(x)));
            if (n == "ABS") return Value::real(rnd(std::fabs(x)));
            if (n == "LOG") {
                if (x <= 0) throw RuntimeError("LOG of non-positive value", e.line);
                return Value::real(rnd(std::log(x)));
            }
            if (x < 0) throw RuntimeError("SQRT of negative value", e.line);
            return Value::real(rnd(std::sqrt(x)));
        }
        case Expr::Kind::Call: {
            Proc p = resolve_proc(e.name, f, e.line);
            if (p.unit->kind != Subprogram::Kind::Function)
                throw RuntimeError(e.name + " is not a function", e.line);
            std::deque<Value> temps;
            auto cells = bind_args(e.args, f, temps, e.line);
            Value v = call(*p.unit, p.env, cells);
            if (v.tag == Value::Tag::Real) v.r = rnd(v.r);
            return v;
        }
        }
        throw RuntimeError("bad expression", e.line);
    }

    bool passed_built_ = false;
    std::set<std::string> passed_;
};

} // namespace

RunResult interpret_reference(const SourceProgram& p, const std::vector<std::string>& input,
                              const InterpOptions& opt) {
    RefMachine m(p, opt);
    return m.run(input);
}

} // namespace farfel
