#pragma once

#include <stdexcept>
#include <string>

namespace farfel {

// Compile-time diagnostic. `pass` tells which pipeline pass rejected the
// program so a lifting alias error is distinguishable from an adlower one.
class CompileError : public std::runtime_error {
public:
    CompileError(std::string pass, std::string message, int line = 0, int col = 0)
        : std::runtime_error(format(pass, message, line, col)),
          pass_(std::move(pass)), line_(line), col_(col) {}

    const std::string& pass() const { return pass_; }
    int line() const { return line_; }
    int col() const { return col_; }

private:
    static std::string format(const std::string& pass, const std::string& msg, int line, int col) {
        std::string s = pass + ": " + msg;
        if (line > 0) {
            s += " (line " + std::to_string(line);
            if (col > 0) s += ", col " + std::to_string(col);
            s += ")";
        }
        return s;
    }
    std::string pass_;
    int line_, col_;
};

class RuntimeError : public std::runtime_error {
public:
    RuntimeError(std::string message, int line = 0)
        : std::runtime_error(line > 0 ? message + " (line " + std::to_string(line) + ")" : message),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

} // namespace farfel
