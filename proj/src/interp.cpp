#include "farfel/interp.hpp"

#include "interp_common.hpp"

#include "farfel/diag.hpp"
#include "farfel/render.hpp"

namespace farfel {

using namespace detail;

namespace {
// ---------------- standard interpreter ----------------

class Machine {
public:
    Machine(const SourceProgram& p, const InterpOptions& opt) : prog_(p), opt_(opt) {
        for (const auto& u : p.units) units_[u.name] = &u;
        impure_ = io_impure_units(p);
    }

    RunResult run(const std::vector<std::string>& input) {
        input_ = input;
        const Subprogram* main = prog_.main_unit();
        if (!main) throw RuntimeError("program has no main unit");
        call(*main, {}, nullptr);
        RunResult r;
        r.output = output_;
        return r;
    }

    std::vector<Value> invoke(const std::string& name, std::vector<Value> args, double* result) {
        const Subprogram* u = find_unit(name);
        std::vector<Value> storage = std::move(args);
        std::vector<Value*> cells;
        cells.reserve(storage.size());
        for (auto& v : storage) cells.push_back(&v);
        Value res = call(*u, cells, nullptr);
        if (result) *result = res.as_real();
        return storage;
    }

private:
    const SourceProgram& prog_;
    InterpOptions opt_;
    std::map<std::string, const Subprogram*> units_;
    std::set<std::string> impure_;
    std::map<const Subprogram*, UnitLayout> layouts_;
    std::vector<std::string> input_;
    size_t input_pos_ = 0;
    std::vector<std::string> output_;
    std::vector<Value> tape_;
    long steps_ = 0;

    struct Frame {
        const Subprogram* unit;
        const UnitLayout* layout;
        std::vector<Value> storage;
        std::vector<Value*> cells;
        std::vector<Value*> dup_cells;  // parameter cells bound more than once
    };

    const Subprogram* find_unit(const std::string& n) {
        auto it = units_.find(n);
        if (it == units_.end()) throw RuntimeError("call to unknown subprogram " + n);
        return it->second;
    }

    const UnitLayout& layout_for(const Subprogram& u) {
        auto it = layouts_.find(&u);
        if (it == layouts_.end()) it = layouts_.emplace(&u, build_layout(u, prog_)).first;
        return it->second;
    }

    double rnd(double v) const { return opt_.single_precision ? static_cast<double>(static_cast<float>(v)) : v; }

    void step(int line) {
        if (opt_.max_steps && ++steps_ > opt_.max_steps)
            throw RuntimeError("step budget exceeded", line);
    }

    Value call(const Subprogram& u, const std::vector<Value*>& arg_cells, const int* line) {
        if (arg_cells.size() != u.params.size())
            throw RuntimeError("call to " + u.name + " with wrong arity", line ? *line : 0);
        Frame f;
        f.unit = &u;
        f.layout = &layout_for(u);
        f.storage.resize(f.layout->names.size());
        f.cells.resize(f.layout->names.size());
        for (size_t i = 0; i < f.cells.size(); ++i) f.cells[i] = &f.storage[i];
        for (size_t i = 0; i < u.params.size(); ++i) {
            int s = f.layout->find(u.params[i]);
            f.cells[s] = arg_cells[i];
        }
        // detect aliased parameter cells for the write assertion
        for (size_t i = 0; i < arg_cells.size(); ++i)
            for (size_t j = i + 1; j < arg_cells.size(); ++j)
                if (arg_cells[i] == arg_cells[j]) f.dup_cells.push_back(arg_cells[i]);
        exec_body(u.body, f);
        if (u.kind == Subprogram::Kind::Function) {
            Value v = *f.cells[f.layout->result_slot];
            if (v.tag == Value::Tag::Undef)
                throw RuntimeError("function " + u.name + " returned no value");
            return v;
        }
        return Value{};
    }

    void write_cell(Frame& f, Value* cell, const Value& v, NumType t, int line) {
        if (!f.dup_cells.empty() &&
            std::find(f.dup_cells.begin(), f.dup_cells.end(), cell) != f.dup_cells.end())
            throw RuntimeError("assignment to aliased argument in " + f.unit->name, line);
        if (t == NumType::Integer) {
            long x = v.tag == Value::Tag::Int ? v.i : static_cast<long>(v.r);
            *cell = Value::integer(x);
        } else {
            *cell = Value::real(rnd(v.as_real()));
        }
    }

    Value read_cell(const Frame& f, int slot, int line) const {
        const Value& v = *f.cells[slot];
        if (v.tag == Value::Tag::Undef)
            throw RuntimeError("read of undefined variable " + f.layout->names[slot] + " in " +
                                   f.unit->name,
                               line);
        return v;
    }

    // returns true if a RETURN was executed
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
            int s = f.layout->find(st.lhs);
            write_cell(f, f.cells[s], v, f.layout->types[s], st.line);
            return false;
        }
        case Statement::Kind::Call:
            do_call_stmt(st, f);
            return false;
        case Statement::Kind::Return:
            return true;
        case Statement::Kind::Continue:
            return false;
        case Statement::Kind::Read: {
            for (const auto& v : st.read_vars) {
                if (input_pos_ >= input_.size())
                    throw RuntimeError("READ past end of input", st.line);
                const std::string& linetext = input_[input_pos_++];
                int s = f.layout->find(v);
                Value val;
                if (f.layout->types[s] == NumType::Integer)
                    val = Value::integer(std::strtol(linetext.c_str(), nullptr, 10));
                else
                    val = Value::real(std::strtod(linetext.c_str(), nullptr));
                write_cell(f, f.cells[s], val, f.layout->types[s], st.line);
            }
            return false;
        }
        case Statement::Kind::Print: {
            for (const Expr& e : st.print_args) output_.push_back(format_value_for_print(eval(e, f)));
            return false;
        }
        case Statement::Kind::IfLogical:
        case Statement::Kind::IfBlock: {
            if (truth(st.cond, f)) return exec_body(st.body, f);
            return exec_body(st.else_body, f);
        }
        case Statement::Kind::DoLoop:
            return exec_do(st, f);
        case Statement::Kind::AdBlock:
            throw RuntimeError("AD block reached the plain interpreter", st.line);
        }
        return false;
    }

    bool exec_do(const Statement& st, Frame& f) {
        int vs = f.layout->find(st.do_var);
        NumType vt = f.layout->types[vs];
        Value from = eval(st.do_from, f), to = eval(st.do_to, f);
        Value stepv = st.has_step ? eval(st.do_step, f) : Value::integer(1);
        long trip;
        double dstep;
        if (vt == NumType::Integer) {
            long a = from.tag == Value::Tag::Int ? from.i : static_cast<long>(from.r);
            long b = to.tag == Value::Tag::Int ? to.i : static_cast<long>(to.r);
            long c = stepv.tag == Value::Tag::Int ? stepv.i : static_cast<long>(stepv.r);
            if (c == 0) throw RuntimeError("DO step is zero", st.line);
            trip = std::max(0L, (b - a + c) / c);
            dstep = static_cast<double>(c);
            write_cell(f, f.cells[vs], Value::integer(a), vt, st.line);
        } else {
            double a = from.as_real(), b = to.as_real(), c = stepv.as_real();
            if (c == 0) throw RuntimeError("DO step is zero", st.line);
            trip = std::max(0L, static_cast<long>((b - a + c) / c));
            dstep = c;
            write_cell(f, f.cells[vs], Value::real(a), vt, st.line);
        }

        // integer loop variables only: skipping must reproduce the exact
        // final value the per-iteration increments would have produced
        bool shortcut = opt_.loop_shortcut && vt == NumType::Integer && loop_pure(st);
        Snapshot prev1, prev2;
        bool have1 = false, have2 = false;

        for (long k = 0; k < trip; ++k) {
            if (exec_body(st.body, f)) return true;
            // advance the loop variable
            if (vt == NumType::Integer) {
                long cur = f.cells[vs]->i;
                *f.cells[vs] = Value::integer(cur + static_cast<long>(dstep));
            } else {
                *f.cells[vs] = Value::real(rnd(f.cells[vs]->r + dstep));
            }
            if (shortcut) {
                Snapshot snap = snapshot_frame(f, vs);
                long remaining = trip - (k + 1);
                if (remaining <= 0) break;
                if (have1 && snap == prev1) {
                    skip_iterations(f, vs, vt, remaining, dstep);
                    break;
                }
                if (have2 && snap == prev2) {
                    if (remaining % 2 == 1) {
                        if (exec_body(st.body, f)) return true;
                        advance_var(f, vs, vt, 1, dstep);
                        remaining -= 1;
                    }
                    skip_iterations(f, vs, vt, remaining, dstep);
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

    void advance_var(Frame& f, int vs, NumType vt, long n, double dstep) {
        if (vt == NumType::Integer)
            *f.cells[vs] = Value::integer(f.cells[vs]->i + n * static_cast<long>(dstep));
        else
            *f.cells[vs] = Value::real(rnd(f.cells[vs]->r + n * dstep));
    }

    void skip_iterations(Frame& f, int vs, NumType vt, long remaining, double dstep) {
        advance_var(f, vs, vt, remaining, dstep);
    }

    Snapshot snapshot_frame(const Frame& f, int skip_slot) const {
        Snapshot s;
        s.vals.reserve(f.cells.size());
        for (size_t i = 0; i < f.cells.size(); ++i) {
            if (static_cast<int>(i) == skip_slot) continue;
            s.vals.push_back(*f.cells[i]);
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
                    if (impure_.count(callee)) pure = false;
                    if (!units_.count(callee)) pure = false;  // unknown target: be safe
                };
                if (s.kind == Statement::Kind::Call) chk(s.callee);
                for_each_expr_in(s, [&](const Expr& top) {
                    for_each_subexpr(top, [&](const Expr& e) {
                        if (e.kind == Expr::Kind::Call) chk(e.name);
                    });
                });
            });
        }
        loop_pure_cache_[&st] = pure;
        return pure;
    }

    void do_call_stmt(const Statement& st, Frame& f) {
        if (is_tape_op(st.callee)) {
            if (st.args.size() != 1 || st.args[0].kind != Expr::Kind::Var)
                throw RuntimeError(st.callee + " takes one variable argument", st.line);
            int s = f.layout->find(st.args[0].name);
            if (st.callee == "TPUSH") {
                tape_.push_back(*f.cells[s]);
            } else {
                if (tape_.empty()) throw RuntimeError("tape underflow", st.line);
                *f.cells[s] = tape_.back();
                tape_.pop_back();
            }
            return;
        }
        int ln = st.line;
        const Subprogram* callee = resolve_callee(st.callee, f, st.line);
        std::deque<Value> temps;
        std::vector<Value*> cells = bind_args(st.args, f, temps);
        call(*callee, cells, &ln);
    }

    const Subprogram* resolve_callee(const std::string& name, Frame& f, int line) {
        int s = f.layout->find(name);
        if (s >= 0 && f.cells[s]->tag == Value::Tag::Proc) {
            auto it = units_.find(f.cells[s]->proc);
            if (it == units_.end())
                throw RuntimeError("call through parameter " + name + " with no target", line);
            return it->second;
        }
        auto it = units_.find(name);
        if (it != units_.end()) return it->second;
        throw RuntimeError("call to unknown subprogram " + name, line);
    }

    std::vector<Value*> bind_args(const std::vector<Expr>& args, Frame& f,
                                  std::deque<Value>& temps) {
        std::vector<Value*> cells;
        cells.reserve(args.size());
        for (const Expr& a : args) {
            if (a.kind == Expr::Kind::Var) {
                int s = f.layout->find(a.name);
                if (s >= 0) {
                    cells.push_back(f.cells[s]);
                    continue;
                }
                if (units_.count(a.name)) {
                    Value v;
                    v.tag = Value::Tag::Proc;
                    v.proc = a.name;
                    temps.push_back(v);
                    cells.push_back(&temps.back());
                    continue;
                }
            }
            temps.push_back(eval(a, f));
            cells.push_back(&temps.back());
        }
        return cells;
    }

    bool truth(const Expr& e, Frame& f) {
        if (e.kind != Expr::Kind::Compare) throw RuntimeError("condition is not a comparison", e.line);
        Value a = eval(e.args[0], f), b = eval(e.args[1], f);
        double x = a.as_real(), y = b.as_real();
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
            int s = f.layout->find(e.name);
            if (s < 0) throw RuntimeError("unknown variable " + e.name, e.line);
            return read_cell(f, s, e.line);
        }
        case Expr::Kind::Negate: {
            Value v = eval(e.args[0], f);
            if (v.tag == Value::Tag::Int) return Value::integer(-v.i);
            return Value::real(rnd(-v.as_real()));
        }
        case Expr::Kind::Compare:
            throw RuntimeError("comparison outside IF", e.line);
        case Expr::Kind::Binop: {
            Value a = eval(e.args[0], f);
            Value b = eval(e.args[1], f);
            return binop(e.op, a, b, e.line);
        }
        case Expr::Kind::Intrinsic: {
            double x = eval(e.args[0], f).as_real();
            return Value::real(rnd(intrinsic(e.name, x, e.line)));
        }
        case Expr::Kind::Call: {
            const Subprogram* callee = resolve_callee(e.name, f, e.line);
            if (callee->kind != Subprogram::Kind::Function)
                throw RuntimeError(e.name + " is not a function", e.line);
            std::deque<Value> temps;
            std::vector<Value*> cells = bind_args(e.args, f, temps);
            int ln = e.line;
            Value v = call(*callee, cells, &ln);
            if (v.tag == Value::Tag::Real) v.r = rnd(v.r);
            return v;
        }
        }
        throw RuntimeError("bad expression", e.line);
    }

    Value binop(const std::string& op, const Value& a, const Value& b, int line) {
        bool ints = a.tag == Value::Tag::Int && b.tag == Value::Tag::Int;
        if (op == "**") {
            if (ints) {
                long base = a.i, ex = b.i, r = 1;
                if (ex < 0) {
                    if (base == 1) return Value::integer(1);
                    if (base == -1) return Value::integer(ex % 2 == 0 ? 1 : -1);
                    return Value::integer(0);
                }
                for (long k = 0; k < ex; ++k) r *= base;
                return Value::integer(r);
            }
            return Value::real(rnd(std::pow(a.as_real(), b.as_real())));
        }
        if (ints) {
            long x = a.i, y = b.i;
            if (op == "+") return Value::integer(x + y);
            if (op == "-") return Value::integer(x - y);
            if (op == "*") return Value::integer(x * y);
            if (y == 0) throw RuntimeError("integer division by zero", line);
            return Value::integer(x / y);
        }
        double x = a.as_real(), y = b.as_real();
        if (op == "+") return Value::real(rnd(x + y));
        if (op == "-") return Value::real(rnd(x - y));
        if (op == "*") return Value::real(rnd(x * y));
        if (y == 0.0) throw RuntimeError("division by zero", line);
        return Value::real(rnd(x / y));
    }

    double intrinsic(const std::string& n, double x, int line) {
        if (n == "SIN") return std::sin(x);
        if (n == "COS") return std::cos(x);
        if (n == "EXP") return std::exp(x);
        if (n == "ABS") return std::fabs(x);
        if (n == "LOG") {
            if (x <= 0) throw RuntimeError("LOG of non-positive value", line);
            return std::log(x);
        }
        if (x < 0) throw RuntimeError("SQRT of negative value", line);
        return std::sqrt(x);
    }

    std::map<const Statement*, bool> loop_pure_cache_;
};

} // namespace

std::string format_value_for_print(const Value& v) {
    if (v.tag == Value::Tag::Int) return std::to_string(v.i);
    if (v.tag == Value::Tag::Real) return format_real(v.r);
    if (v.tag == Value::Tag::Undef) throw RuntimeError("PRINT of undefined value");
    return v.proc;
}

RunResult interpret(const SourceProgram& p, const std::vector<std::string>& input,
                    const InterpOptions& opt) {
    Machine m(p, opt);
    return m.run(input);
}

std::vector<Value> call_unit(const SourceProgram& p, const std::string& unit,
                             std::vector<Value> args, const InterpOptions& opt, double* result) {
    Machine m(p, opt);
    return m.invoke(unit, std::move(args), result);
}

} // namespace farfel
