#pragma once

#include "farfel/ast.hpp"
#include "farfel/lexer.hpp"

namespace farfel {

SourceProgram parse(const std::vector<Token>& tokens, std::string source_name = "");
SourceProgram parse_source(const std::string& text, std::string source_name = "");

} // namespace farfel
