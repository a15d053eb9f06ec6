#pragma once

#include <string>
#include <vector>

namespace farfel {

enum class TokKind {
    Ident,     // identifiers and keywords, normalized to upper case
    IntLit,
    RealLit,
    Plus, Minus, Star, StarStar, Slash,
    LParen, RParen, Comma, Assign,
    Relop,     // .LT. .LE. .GT. .GE. .EQ. .NE. (text carries which)
    Newline,   // end of a logical line
    Eof,
};

struct Token {
    TokKind kind;
    std::string text;   // uppercased source text
    double real_val = 0.0;
    long int_val = 0;
    int line = 0;
    int col = 0;
};

// Free-form, column-insensitive lexing. A line whose first non-blank
// character is '+' continues the previous logical line.
std::vector<Token> tokenize(const std::string& source);

} // namespace farfel
