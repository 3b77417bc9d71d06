#pragma once

#include <string>
#include <vector>

#include "matrix.hpp"

namespace kfarm {

// Working-directory context for bridge file and exec operations. The stack
// never drains below the process start directory; the top is the effective
// directory. State is per-instance: nothing here chdir()s the process.
class DirStack {
public:
    DirStack(); // bottom = current working directory at construction

    const std::string& push(const std::string& path);
    const std::string& pop();
    const std::string& current() const { return stack_.back(); }
    std::size_t depth() const { return stack_.size(); }

    // Absolute paths pass through; relative ones resolve against the top.
    std::string resolve(const std::string& path) const;

private:
    std::vector<std::string> stack_;
};

// An external executable honoring the bridge contract, plus any fixed
// arguments it needs.
struct ExecSpec {
    std::string name;
    std::string path;
    std::vector<std::string> args;
};

// Matrix exchange file: first line the common order n, then every matrix's
// rows in sequence, one row per line, entries space-separated in shortest
// round-trip decimal form.
void write_bridge_input(const DirStack& dirs, const std::string& path,
                        const std::vector<Matrix>& mats);

// One pad space, then x rounded half-away-from-zero to 6 decimals and
// right-justified in a 10-character field (11 characters total). Values
// whose rendering would not fit are an error.
std::string format_fixed(double x);

// Whitespace-separated numeric tokens; the offending text is reported when
// a token is not a number.
std::vector<double> tokenize_numbers(const std::string& text);

// Spawn the executable with stdin redirected from the input file, capture
// stdout to completion and tokenize it. Nonzero exit is an error.
std::vector<double> run_external(const DirStack& dirs, const ExecSpec& exec,
                                 const std::string& input_path,
                                 double timeout_sec = 60.0);

Matrix parse_square(const std::vector<double>& tokens, std::int64_t n);

// The full exchange: build the two canonical fill matrices of order ns,
// write the bridge file, run the external product program, parse the
// product back and return its eigenvalues.
Spectrum bridge_pipeline(DirStack& dirs, std::int64_t ns,
                           const ExecSpec& exec, double timeout_sec = 60.0);

// Reference worker for the bridge contract: reads an order n and two n x n
// matrices from stdin, writes the n^2 product entries to stdout in the
// fixed-width format, one per line. Returns a process exit code.
int bridge_worker_stdio();

} // namespace kfarm
