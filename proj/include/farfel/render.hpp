#pragma once

#include "farfel/ast.hpp"

#include <string>

namespace farfel {

std::string render(const SourceProgram& p);
std::string render_unit(const Subprogram& u, int depth = 0);
std::string render_expr(const Expr& e);
std::string render_statement(const Statement& st, int depth = 0);

// first header line of a unit, e.g. "FUNCTION ROOT_1(F, F1, X0, N)"
std::string unit_header(const Subprogram& u);

std::string format_real(double v);

} // namespace farfel
