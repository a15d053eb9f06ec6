// farfel-forge: pipeline driver. Lowers the language extensions, generates
// derivative code with the builtin engine (or emits a driver script for an
// external tool), and optionally interprets the result.

#include "farfel/diag.hpp"
#include "farfel/interp.hpp"
#include "farfel/lexer.hpp"
#include "farfel/parser.hpp"
#include "farfel/pipeline.hpp"
#include "farfel/render.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string stem_of(const std::string& path) {
    size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

std::string dump_tokens(const std::vector<farfel::Token>& toks) {
    std::string out;
    for (const auto& t : toks) {
        if (t.kind == farfel::TokKind::Eof) break;
        if (t.kind == farfel::TokKind::Newline) {
            out += "--\n";
            continue;
        }
        out += std::to_string(t.line) + ":" + std::to_string(t.col) + " " + t.text + "\n";
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FARFEL prepreprocessor and interpreter"};
    std::string input;
    std::string emit;
    std::string backend = "builtin";
    std::string tool_style = "tapenade";
    std::string output_path;
    bool run = false;
    bool single = false;
    bool no_loop_shortcut = false;

    app.add_option("input", input, "FARFEL source file")->required();
    app.add_option("--emit", emit, "stage artifact to print")
        ->check(CLI::IsMember(
            {"tokens", "ast", "callgraph", "lifted", "canonical", "plan", "fortran", "script"}));
    app.add_option("--backend", backend, "derivative generator")
        ->check(CLI::IsMember({"builtin", "script"}));
    app.add_option("--tool-style", tool_style, "generated-name convention")
        ->check(CLI::IsMember({"tapenade", "adifor"}));
    app.add_flag("--run", run, "interpret the final program (builtin backend)");
    app.add_flag("--single", single, "single-precision arithmetic");
    app.add_flag("--no-loop-shortcut", no_loop_shortcut,
                 "disable the fixed-point DO loop short-circuit");
    app.add_option("-o,--output", output_path, "write the artifact here instead of stdout");
    CLI11_PARSE(app, argc, argv);

    if (run && backend != "builtin") {
        std::cerr << "farfel-forge: --run requires --backend builtin\n";
        return 1;
    }
    if (emit == "script" && backend != "script") {
        std::cerr << "farfel-forge: --emit script requires --backend script\n";
        return 1;
    }

    std::ifstream in(input);
    if (!in) {
        std::cerr << "farfel-forge: cannot open " << input << "\n";
        return 1;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    std::string source = ss.str();

    auto write_artifact = [&](const std::string& text) {
        if (output_path.empty()) {
            std::cout << text;
            return 0;
        }
        std::ofstream out(output_path);
        if (!out) {
            std::cerr << "farfel-forge: cannot write " << output_path << "\n";
            return 1;
        }
        out << text;
        return 0;
    };

    try {
        if (emit == "tokens") return write_artifact(dump_tokens(farfel::tokenize(source)));

        farfel::SourceProgram parsed = farfel::parse_source(source, input);
        if (emit == "ast") return write_artifact(farfel::dump_ast(parsed));

        farfel::PipelineOptions opt;
        opt.backend_script = backend == "script";
        opt.tool_style =
            tool_style == "adifor" ? farfel::ToolStyle::Adifor : farfel::ToolStyle::Tapenade;
        farfel::PipelineResult result = farfel::run_pipeline(parsed, opt);

        if (emit == "callgraph") return write_artifact(farfel::render_call_graph(result.graph));
        if (emit == "lifted") return write_artifact(farfel::render(result.lifted));
        if (emit == "canonical") return write_artifact(farfel::render(result.canonical));
        if (emit == "plan") return write_artifact(farfel::render_plan(result.plan));
        if (emit == "script")
            return write_artifact(
                farfel::render_script(result.plan, stem_of(input), opt.tool_style));
        if (emit == "fortran") return write_artifact(farfel::render(result.final_program));

        if (run) {
            std::vector<std::string> lines;
            std::string line;
            while (std::getline(std::cin, line)) lines.push_back(line);
            farfel::InterpOptions iopt;
            iopt.single_precision = single;
            iopt.loop_shortcut = !no_loop_shortcut;
            farfel::RunResult rr = farfel::interpret(result.final_program, lines, iopt);
            std::string out;
            for (const auto& l : rr.output) out += l + "\n";
            return write_artifact(out);
        }
        return 0;
    } catch (const farfel::CompileError& e) {
        std::cerr << "farfel-forge: " << e.what() << "\n";
        return 1;
    } catch (const farfel::RuntimeError& e) {
        std::cerr << "farfel-forge: runtime error: " << e.what() << "\n";
        return 2;
    }
}
