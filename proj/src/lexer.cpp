#include "farfel/lexer.hpp"

#include "farfel/diag.hpp"

#include <cctype>
#include <cstdlib>

namespace farfel {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)); }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct LogicalLine {
    std::string text;
    std::vector<int> line_of;  // physical line per character
    std::vector<int> col_of;
};

// Splice continuation lines ('+' as first non-blank) onto their predecessor.
std::vector<LogicalLine> splice(const std::string& source) {
    std::vector<LogicalLine> out;
    int lineno = 0;
    size_t i = 0;
    while (i <= source.size()) {
        size_t j = source.find('\n', i);
        if (j == std::string::npos) j = source.size();
        ++lineno;
        std::string phys = source.substr(i, j - i);
        size_t nb = phys.find_first_not_of(" \t\r");
        if (nb == std::string::npos) {
            // blank line
        } else if (phys[nb] == '+' && !out.empty()) {
            for (size_t k = nb + 1; k < phys.size(); ++k) {
                out.back().text.push_back(phys[k]);
                out.back().line_of.push_back(lineno);
                out.back().col_of.push_back(static_cast<int>(k) + 1);
            }
        } else {
            LogicalLine ll;
            ll.text = phys;
            ll.line_of.resize(phys.size(), lineno);
            ll.col_of.resize(phys.size());
            for (size_t k = 0; k < phys.size(); ++k) ll.col_of[k] = static_cast<int>(k) + 1;
            out.push_back(std::move(ll));
        }
        if (j == source.size()) break;
        i = j + 1;
    }
    return out;
}

} // namespace

std::vector<Token> tokenize(const std::string& source) {
    std::vector<Token> toks;
    for (const LogicalLine& ll : splice(source)) {
        const std::string& s = ll.text;
        size_t i = 0;
        bool emitted = false;
        auto at = [&](size_t k) { return k < s.size() ? s[k] : '\0'; };
        auto push = [&](TokKind kind, size_t start, std::string text) {
            Token t;
            t.kind = kind;
            t.text = std::move(text);
            t.line = ll.line_of[start];
            t.col = ll.col_of[start];
            toks.push_back(std::move(t));
            emitted = true;
        };
        while (i < s.size()) {
            char c = s[i];
            if (c == ' ' || c == '\t' || c == '\r') { ++i; continue; }
            size_t start = i;
            if (ident_start(c)) {
                std::string w;
                while (i < s.size() && ident_char(s[i])) w.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(s[i++]))));
                push(TokKind::Ident, start, w);
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && std::isdigit(static_cast<unsigned char>(at(i + 1))))) {
                std::string w;
                bool is_real = false;
                while (std::isdigit(static_cast<unsigned char>(at(i)))) w.push_back(s[i++]);
                if (at(i) == '.' && !ident_start(at(i + 1))) {  // not a .LT.-style operator
                    is_real = true;
                    w.push_back(s[i++]);
                    while (std::isdigit(static_cast<unsigned char>(at(i)))) w.push_back(s[i++]);
                }
                if (at(i) == 'e' || at(i) == 'E') {
                    size_t k = i + 1;
                    if (at(k) == '+' || at(k) == '-') ++k;
                    if (std::isdigit(static_cast<unsigned char>(at(k)))) {
                        is_real = true;
                        w.push_back('E');
                        ++i;
                        if (at(i) == '+' || at(i) == '-') w.push_back(s[i++]);
                        while (std::isdigit(static_cast<unsigned char>(at(i)))) w.push_back(s[i++]);
                    }
                }
                Token t;
                t.kind = is_real ? TokKind::RealLit : TokKind::IntLit;
                t.text = w;
                if (is_real) t.real_val = std::strtod(w.c_str(), nullptr);
                else t.int_val = std::strtol(w.c_str(), nullptr, 10);
                t.line = ll.line_of[start];
                t.col = ll.col_of[start];
                toks.push_back(std::move(t));
                emitted = true;
            } else if (c == '.') {
                // relational operator .XX.
                static const char* ops[] = {"LT", "LE", "GT", "GE", "EQ", "NE"};
                std::string name;
                size_t k = i + 1;
                while (k < s.size() && ident_start(s[k]))
                    name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(s[k++]))));
                bool ok = k < s.size() && s[k] == '.';
                if (ok) {
                    bool found = false;
                    for (const char* op : ops) found = found || name == op;
                    ok = found;
                }
                if (!ok)
                    throw CompileError("lex", "illegal character '.'", ll.line_of[start], ll.col_of[start]);
                push(TokKind::Relop, start, "." + name + ".");
                i = k + 1;
            } else if (c == '*') {
                if (at(i + 1) == '*') { push(TokKind::StarStar, start, "**"); i += 2; }
                else { push(TokKind::Star, start, "*"); ++i; }
            } else {
                ++i;
                switch (c) {
                case '+': push(TokKind::Plus, start, "+"); break;
                case '-': push(TokKind::Minus, start, "-"); break;
                case '/': push(TokKind::Slash, start, "/"); break;
                case '(': push(TokKind::LParen, start, "("); break;
                case ')': push(TokKind::RParen, start, ")"); break;
                case ',': push(TokKind::Comma, start, ","); break;
                case '=': push(TokKind::Assign, start, "="); break;
                default:
                    throw CompileError("lex", std::string("illegal character '") + c + "'",
                                       ll.line_of[start], ll.col_of[start]);
                }
            }
        }
        if (emitted) {
            Token t;
            t.kind = TokKind::Newline;
            t.text = "\n";
            t.line = ll.line_of.empty() ? 0 : ll.line_of[0];
            t.col = 0;
            toks.push_back(std::move(t));
        }
    }
    Token eof;
    eof.kind = TokKind::Eof;
    toks.push_back(eof);
    return toks;
}

} // namespace farfel
