#include "farfel/parser.hpp"

#include "farfel/diag.hpp"

#include <set>

namespace farfel {

namespace {

class Parser {
public:
    Parser(const std::vector<Token>& toks, std::string name)
        : toks_(toks), source_name_(std::move(name)) {}

    SourceProgram run() {
        SourceProgram p;
        p.source_name = source_name_;
        skip_newlines();
        while (!at(TokKind::Eof)) {
            p.units.push_back(parse_unit(/*top_level=*/true));
            skip_newlines();
        }
        int mains = 0;
        for (auto& u : p.units)
            if (u.kind == Subprogram::Kind::Main) ++mains;
        if (mains != 1)
            throw CompileError("parse", "expected exactly one main program, found " + std::to_string(mains));
        std::set<std::string> names;
        for (auto& u : p.units)
            if (!names.insert(u.name).second)
                throw CompileError("parse", "duplicate unit name " + u.name, u.line);
        return p;
    }

private:
    const std::vector<Token>& toks_;
    std::string source_name_;
    size_t pos_ = 0;

    const Token& cur() const { return toks_[pos_]; }
    bool at(TokKind k) const { return cur().kind == k; }
    bool at_word(const char* w) const { return at(TokKind::Ident) && cur().text == w; }
    const Token& next() { return toks_[pos_++]; }
    void skip_newlines() {
        while (at(TokKind::Newline)) next();
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw CompileError("parse", msg, cur().line, cur().col);
    }
    void expect(TokKind k, const char* what) {
        if (!at(k)) fail(std::string("expected ") + what);
        next();
    }
    std::string expect_ident() {
        if (!at(TokKind::Ident)) fail("expected identifier");
        return next().text;
    }
    void end_of_statement() {
        if (at(TokKind::Eof)) return;
        if (!at(TokKind::Newline)) fail("unexpected tokens at end of statement");
        next();
    }

    // --- units ---

    Subprogram parse_unit(bool top_level) {
        skip_newlines();
        Subprogram u;
        u.line = cur().line;
        int hdr_label = take_label();
        if (hdr_label != 0) fail("unit header may not carry a label");
        if (at_word("PROGRAM")) {
            if (!top_level) fail("PROGRAM unit may not be nested");
            next();
            u.kind = Subprogram::Kind::Main;
            u.name = expect_ident();
            end_of_statement();
        } else if (at_word("FUNCTION") || at_word("SUBROUTINE")) {
            u.kind = cur().text == "FUNCTION" ? Subprogram::Kind::Function : Subprogram::Kind::Subroutine;
            next();
            u.name = expect_ident();
            if (at(TokKind::LParen)) {
                next();
                if (!at(TokKind::RParen)) {
                    u.params.push_back(expect_ident());
                    while (at(TokKind::Comma)) {
                        next();
                        u.params.push_back(expect_ident());
                    }
                }
                expect(TokKind::RParen, ")");
            }
            std::set<std::string> seen;
            for (auto& pn : u.params)
                if (!seen.insert(pn).second)
                    fail("duplicate parameter " + pn + " in " + u.name);
            end_of_statement();
        } else {
            fail("expected PROGRAM, FUNCTION or SUBROUTINE");
        }

        bool saw_executable = false;
        for (;;) {
            skip_newlines();
            if (at(TokKind::Eof)) fail("unexpected end of file inside " + u.name);
            size_t save = pos_;
            int label = take_label();
            if (at_word("END") && peek_is_end_of_unit()) {
                if (label != 0) fail("END of unit may not carry a label here");
                next();
                end_of_statement();
                break;
            }
            if (at_word("FUNCTION") || at_word("SUBROUTINE")) {
                // nested subprogram definition
                if (label != 0) fail("nested subprogram header may not carry a label");
                if (saw_executable)
                    throw CompileError("parse",
                                       "nested subprogram after first executable statement of " + u.name,
                                       cur().line);
                pos_ = save;
                u.nested.push_back(parse_unit(/*top_level=*/false));
                continue;
            }
            if (at_word("EXTERNAL") || at_word("REAL") || at_word("INTEGER")) {
                if (saw_executable) fail("declaration after first executable statement");
                if (label != 0) fail("declarations may not carry labels");
                u.decls.push_back(parse_declaration());
                continue;
            }
            pos_ = save;
            u.body.push_back(parse_statement());
            saw_executable = true;
        }
        check_labels(u);
        return u;
    }

    // True when the upcoming END terminates a unit (bare END, not END ADF/ADR/IF).
    bool peek_is_end_of_unit() const {
        const Token& n = toks_[pos_ + 1];
        if (n.kind != TokKind::Ident) return true;
        return n.text != "ADF" && n.text != "ADR" && n.text != "IF";
    }

    int take_label() {
        if (at(TokKind::IntLit)) {
            long v = cur().int_val;
            next();
            return static_cast<int>(v);
        }
        return 0;
    }

    Declaration parse_declaration() {
        Declaration d;
        d.line = cur().line;
        std::string kw = expect_ident();
        if (kw == "EXTERNAL") d.kind = Declaration::Kind::External;
        else {
            d.kind = Declaration::Kind::TypeDecl;
            d.type = kw == "REAL" ? NumType::Real : NumType::Integer;
        }
        d.names.push_back(expect_ident());
        while (at(TokKind::Comma)) {
            next();
            d.names.push_back(expect_ident());
        }
        end_of_statement();
        return d;
    }

    // --- statements ---

    Statement parse_statement() {
        int label = take_label();
        Statement st = parse_unlabeled_statement(/*allow_blocky=*/true);
        st.label = label;
        return st;
    }

    Statement parse_unlabeled_statement(bool allow_blocky) {
        Statement st;
        st.line = cur().line;
        if (!at(TokKind::Ident)) fail("expected statement");
        const std::string& w = cur().text;

        if (w == "CALL") {
            next();
            st.kind = Statement::Kind::Call;
            st.callee = expect_ident();
            if (at(TokKind::LParen)) {
                next();
                if (!at(TokKind::RParen)) {
                    st.args.push_back(parse_expr());
                    while (at(TokKind::Comma)) {
                        next();
                        st.args.push_back(parse_expr());
                    }
                }
                expect(TokKind::RParen, ")");
            }
            end_of_statement();
            return st;
        }
        if (w == "RETURN") {
            next();
            st.kind = Statement::Kind::Return;
            end_of_statement();
            return st;
        }
        if (w == "CONTINUE") {
            next();
            st.kind = Statement::Kind::Continue;
            end_of_statement();
            return st;
        }
        if (w == "READ") {
            next();
            st.kind = Statement::Kind::Read;
            st.read_vars.push_back(expect_ident());
            while (at(TokKind::Comma)) {
                next();
                st.read_vars.push_back(expect_ident());
            }
            end_of_statement();
            return st;
        }
        if (w == "PRINT") {
            next();
            st.kind = Statement::Kind::Print;
            st.print_args.push_back(parse_expr());
            while (at(TokKind::Comma)) {
                next();
                st.print_args.push_back(parse_expr());
            }
            end_of_statement();
            return st;
        }
        if (w == "IF") {
            if (!allow_blocky) fail("IF may not appear here");
            return parse_if();
        }
        if (w == "DO") {
            if (!allow_blocky) fail("DO may not appear here");
            return parse_do();
        }
        if (w == "ADF" || w == "ADR") {
            if (!allow_blocky) fail("AD block may not appear here");
            return parse_ad_block(w == "ADF");
        }
        // assignment
        std::string name = expect_ident();
        if (!at(TokKind::Assign)) fail("expected '=' after " + name);
        next();
        st.kind = Statement::Kind::Assign;
        st.lhs = name;
        st.rhs = parse_expr();
        end_of_statement();
        return st;
    }

    Statement parse_if() {
        Statement st;
        st.line = cur().line;
        next();  // IF
        expect(TokKind::LParen, "(");
        st.cond = parse_expr();
        if (st.cond.kind != Expr::Kind::Compare)
            fail("IF condition must be a comparison");
        expect(TokKind::RParen, ")");
        if (at_word("THEN")) {
            next();
            end_of_statement();
            st.kind = Statement::Kind::IfBlock;
            bool in_else = false;
            for (;;) {
                skip_newlines();
                size_t save = pos_;
                int label = take_label();
                if (at_word("ELSE")) {
                    if (label != 0) fail("ELSE may not carry a label");
                    if (in_else) fail("duplicate ELSE");
                    next();
                    end_of_statement();
                    in_else = true;
                    continue;
                }
                if (at_word("END") && toks_[pos_ + 1].kind == TokKind::Ident &&
                    toks_[pos_ + 1].text == "IF") {
                    if (label != 0) fail("END IF may not carry a label");
                    next();
                    next();
                    end_of_statement();
                    break;
                }
                pos_ = save;
                Statement inner = parse_statement();
                (in_else ? st.else_body : st.body).push_back(std::move(inner));
            }
            return st;
        }
        st.kind = Statement::Kind::IfLogical;
        st.body.push_back(parse_unlabeled_statement(/*allow_blocky=*/false));
        return st;
    }

    Statement parse_do() {
        Statement st;
        st.line = cur().line;
        st.kind = Statement::Kind::DoLoop;
        next();  // DO
        if (!at(TokKind::IntLit)) fail("expected DO terminal label");
        st.do_end_label = static_cast<int>(next().int_val);
        st.do_var = expect_ident();
        expect(TokKind::Assign, "=");
        st.do_from = parse_expr();
        expect(TokKind::Comma, ",");
        st.do_to = parse_expr();
        if (at(TokKind::Comma)) {
            next();
            st.do_step = parse_expr();
            st.has_step = true;
        }
        end_of_statement();
        for (;;) {
            skip_newlines();
            if (at(TokKind::Eof)) break;
            if (at_word("END") && peek_is_end_of_unit()) break;
            Statement inner = parse_statement();
            int lbl = inner.label;
            st.body.push_back(std::move(inner));
            if (lbl == st.do_end_label) return st;
        }
        throw CompileError("parse", "DO label " + std::to_string(st.do_end_label) + " never defined",
                           st.line);
    }

    Statement parse_ad_block(bool forward) {
        Statement st;
        st.line = cur().line;
        st.kind = Statement::Kind::AdBlock;
        st.ad_forward = forward;
        const char* seed_kw = forward ? "TANGENT" : "COTANGENT";
        next();  // ADF / ADR
        expect(TokKind::LParen, "(");
        // either the dispensation ADF(v) or TANGENT(v)=expr list
        if (at(TokKind::Ident) && cur().text != seed_kw) {
            Statement::Seed s;
            s.line = cur().line;
            s.var = expect_ident();
            s.expr = Expr::make_int(1);
            st.opens.push_back(std::move(s));
        } else {
            for (;;) {
                if (!at_word(seed_kw)) fail(std::string("expected ") + seed_kw);
                next();
                Statement::Seed s;
                s.line = cur().line;
                expect(TokKind::LParen, "(");
                s.var = expect_ident();
                expect(TokKind::RParen, ")");
                expect(TokKind::Assign, "=");
                s.expr = parse_expr();
                st.opens.push_back(std::move(s));
                if (!at(TokKind::Comma)) break;
                next();
            }
        }
        expect(TokKind::RParen, ")");
        end_of_statement();
        const char* kw = forward ? "ADF" : "ADR";
        for (;;) {
            skip_newlines();
            if (at(TokKind::Eof))
                throw CompileError("parse", std::string("unclosed ") + kw + " block", st.line);
            size_t save = pos_;
            int label = take_label();
            if (at_word("END") && peek_is_end_of_unit())
                throw CompileError("parse", std::string("unclosed ") + kw + " block", st.line);
            if (at_word("END") && toks_[pos_ + 1].kind == TokKind::Ident &&
                (toks_[pos_ + 1].text == "ADF" || toks_[pos_ + 1].text == "ADR")) {
                if (label != 0) fail("END ADF/ADR may not carry a label");
                next();
                std::string closer = next().text;
                if ((closer == "ADF") != forward)
                    throw CompileError("parse", "END " + closer + " closes an " + kw + " block",
                                       cur().line);
                parse_ad_closes(st);
                break;
            }
            pos_ = save;
            st.body.push_back(parse_statement());
        }
        return st;
    }

    void parse_ad_closes(Statement& st) {
        const char* seed_kw = st.ad_forward ? "TANGENT" : "COTANGENT";
        expect(TokKind::LParen, "(");
        for (;;) {
            Statement::Extract x;
            x.line = cur().line;
            x.dest = expect_ident();
            expect(TokKind::Assign, "=");
            if (!at_word(seed_kw)) fail(std::string("expected ") + seed_kw);
            next();
            expect(TokKind::LParen, "(");
            x.src = expect_ident();
            expect(TokKind::RParen, ")");
            st.closes.push_back(std::move(x));
            if (!at(TokKind::Comma)) break;
            next();
        }
        expect(TokKind::RParen, ")");
        end_of_statement();
    }

    // --- expressions ---

    Expr parse_expr() { return parse_compare(); }

    Expr parse_compare() {
        Expr lhs = parse_add();
        if (at(TokKind::Relop)) {
            Expr e;
            e.kind = Expr::Kind::Compare;
            e.op = next().text;
            e.line = lhs.line;
            e.args.push_back(std::move(lhs));
            e.args.push_back(parse_add());
            return e;
        }
        return lhs;
    }

    Expr parse_add() {
        Expr lhs = parse_mul();
        while (at(TokKind::Plus) || at(TokKind::Minus)) {
            std::string op = next().text;
            Expr rhs = parse_mul();
            lhs = Expr::make_bin(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    Expr parse_mul() {
        Expr lhs = parse_unary();
        while (at(TokKind::Star) || at(TokKind::Slash)) {
            std::string op = next().text;
            Expr rhs = parse_unary();
            lhs = Expr::make_bin(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    Expr parse_unary() {
        if (at(TokKind::Minus)) {
            int line = cur().line;
            next();
            Expr e;
            e.kind = Expr::Kind::Negate;
            e.line = line;
            e.args.push_back(parse_unary());
            return e;
        }
        if (at(TokKind::Plus)) {
            next();
            return parse_unary();
        }
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_primary();
        if (at(TokKind::StarStar)) {
            next();
            Expr exp = parse_unary();  // right-assoc; -X**2 is -(X**2)
            return Expr::make_bin("**", std::move(base), std::move(exp));
        }
        return base;
    }

    Expr parse_primary() {
        if (at(TokKind::IntLit)) {
            Expr e = Expr::make_int(cur().int_val);
            e.line = cur().line;
            next();
            return e;
        }
        if (at(TokKind::RealLit)) {
            Expr e = Expr::make_real(cur().real_val);
            e.line = cur().line;
            next();
            return e;
        }
        if (at(TokKind::LParen)) {
            next();
            Expr e = parse_expr();
            expect(TokKind::RParen, ")");
            return e;
        }
        if (at(TokKind::Ident)) {
            int line = cur().line, col = cur().col;
            std::string name = next().text;
            if (at(TokKind::LParen)) {
                next();
                std::vector<Expr> args;
                if (!at(TokKind::RParen)) {
                    args.push_back(parse_expr());
                    while (at(TokKind::Comma)) {
                        next();
                        args.push_back(parse_expr());
                    }
                }
                expect(TokKind::RParen, ")");
                Expr e = Expr::make_call(name, std::move(args));
                if (e.kind == Expr::Kind::Intrinsic && e.args.size() != 1)
                    fail("intrinsic " + name + " takes one argument");
                e.line = line;
                e.col = col;
                return e;
            }
            Expr e = Expr::make_var(name);
            e.line = line;
            e.col = col;
            return e;
        }
        fail("expected expression");
    }

    // every label referenced by a DO or labeled statement check
    void check_labels(const Subprogram& u) {
        std::set<int> defined;
        for_each_statement(u.body, [&](const Statement& st) {
            if (st.label != 0) defined.insert(st.label);
        });
        for_each_statement(u.body, [&](const Statement& st) {
            if (st.kind == Statement::Kind::DoLoop && !defined.count(st.do_end_label))
                throw CompileError("parse",
                                   "DO label " + std::to_string(st.do_end_label) + " not defined in " + u.name,
                                   st.line);
        });
        for (const auto& n : u.nested) check_labels(n);
    }
};

} // namespace

SourceProgram parse(const std::vector<Token>& tokens, std::string source_name) {
    return Parser(tokens, std::move(source_name)).run();
}

SourceProgram parse_source(const std::string& text, std::string source_name) {
    return parse(tokenize(text), std::move(source_name));
}

} // namespace farfel
