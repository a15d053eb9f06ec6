#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace farfel {

enum class NumType { Real, Integer };

bool is_intrinsic(const std::string& name);

struct Expr {
    enum class Kind { Const, Var, Binop, Negate, Compare, Intrinsic, Call };
    Kind kind = Kind::Const;

    // Const
    double value = 0.0;
    bool int_literal = false;

    // Var / Intrinsic / Call: name; Binop / Compare: op
    std::string name;
    std::string op;

    // Binop/Compare: [lhs, rhs]; Negate/Intrinsic: [arg]; Call: args
    std::vector<Expr> args;

    // Call only: closure-arg counts parallel to args. arg_slots[i] = number of
    // following arguments that are closure args accompanying args[i]. Pass
    // metadata, not syntax; ignored by rendering and structural equality.
    std::vector<int> arg_slots;

    int line = 0, col = 0;

    static Expr make_int(long v);
    static Expr make_real(double v);
    static Expr make_var(std::string n);
    static Expr make_call(std::string n, std::vector<Expr> a);
    static Expr make_bin(std::string o, Expr l, Expr r);

    int slot_of(size_t arg_index) const {
        return arg_index < arg_slots.size() ? arg_slots[arg_index] : 0;
    }
};

struct Statement {
    enum class Kind { Assign, Call, IfLogical, IfBlock, DoLoop, Continue, Return, Read, Print, AdBlock };
    Kind kind = Kind::Continue;
    int label = 0;  // 0 = unlabeled
    int line = 0;

    // Assign
    std::string lhs;
    Expr rhs;

    // Call
    std::string callee;
    std::vector<Expr> args;
    std::vector<int> arg_slots;  // as in Expr

    // IfLogical / IfBlock
    Expr cond;
    std::vector<Statement> body;       // if-then body, do body, logical-if single stmt, ad body
    std::vector<Statement> else_body;

    // DoLoop
    int do_end_label = 0;
    std::string do_var;
    Expr do_from, do_to, do_step;
    bool has_step = false;

    // Read / Print
    std::vector<std::string> read_vars;
    std::vector<Expr> print_args;

    // AdBlock
    bool ad_forward = true;
    int ad_id = 0;  // assigned at canonicalization; pass metadata
    struct Seed { std::string var; Expr expr; int line = 0; };
    struct Extract { std::string dest; std::string src; int line = 0; };
    std::vector<Seed> opens;
    std::vector<Extract> closes;

    int slot_of(size_t arg_index) const {
        return arg_index < arg_slots.size() ? arg_slots[arg_index] : 0;
    }
};

struct Declaration {
    enum class Kind { External, TypeDecl };
    Kind kind = Kind::External;
    NumType type = NumType::Real;
    std::vector<std::string> names;
    int line = 0;
};

struct Subprogram {
    enum class Kind { Function, Subroutine, Main };
    Kind kind = Kind::Subroutine;
    std::string name;
    std::vector<std::string> params;
    std::vector<Declaration> decls;
    std::vector<Subprogram> nested;
    std::vector<Statement> body;
    int line = 0;

    // filled by infer_types: numeric type per name bound in this unit
    // (params, locals, result var). Externals carry no numeric entry.
    std::map<std::string, NumType> var_types;
    std::set<std::string> externals;  // names declared EXTERNAL here (incl. synthesized)

    bool declared_external(const std::string& n) const { return externals.count(n) != 0; }
};

struct SourceProgram {
    std::string source_name;
    std::vector<Subprogram> units;

    Subprogram* find_unit(const std::string& name);
    const Subprogram* find_unit(const std::string& name) const;
    const Subprogram* main_unit() const;
};

// Structural equality; ignores line/col and closure-slot metadata.
bool structurally_equal(const Expr& a, const Expr& b);
bool structurally_equal(const Statement& a, const Statement& b);
bool structurally_equal(const Subprogram& a, const Subprogram& b);
bool structurally_equal(const SourceProgram& a, const SourceProgram& b);

// Walk helpers (visit every statement recursively, pre-order).
void for_each_statement(std::vector<Statement>& body, const std::function<void(Statement&)>& fn);
void for_each_statement(const std::vector<Statement>& body, const std::function<void(const Statement&)>& fn);

// Every expression in a statement, including cond/do bounds/seeds; does not
// descend into nested statements.
void for_each_expr_in(Statement& st, const std::function<void(Expr&)>& fn);
void for_each_expr_in(const Statement& st, const std::function<void(const Expr&)>& fn);
void for_each_subexpr(Expr& e, const std::function<void(Expr&)>& fn);  // pre-order incl. e
void for_each_subexpr(const Expr& e, const std::function<void(const Expr&)>& fn);

} // namespace farfel
