#include "bridge.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "proc.hpp"

namespace fs = std::filesystem;

namespace kfarm {

DirStack::DirStack() {
    std::error_code ec;
    fs::path cwd = fs::current_path(ec);
    if (ec)
        throw Error(Errc::io, "cannot determine current directory: " + ec.message());
    stack_.push_back(cwd.string());
}

std::string DirStack::resolve(const std::string& path) const {
    fs::path p(path);
    if (p.is_absolute())
        return p.lexically_normal().string();
    return (fs::path(current()) / p).lexically_normal().string();
}

const std::string& DirStack::push(const std::string& path) {
    std::string abs = resolve(path);
    std::error_code ec;
    if (!fs::is_directory(abs, ec))
        throw Error(Errc::io, abs + ": not a directory");
    stack_.push_back(std::move(abs));
    return stack_.back();
}

const std::string& DirStack::pop() {
    if (stack_.size() <= 1)
        throw Error(Errc::state, "directory stack is at its start directory");
    stack_.pop_back();
    return stack_.back();
}

void write_bridge_input(const DirStack& dirs, const std::string& path,
                        const std::vector<Matrix>& mats) {
    if (mats.empty())
        throw Error(Errc::bad_value, "bridge input needs at least one matrix");
    const std::size_t n = mats[0].rows();
    for (const auto& m : mats)
        if (m.rows() != n || m.cols() != n)
            throw Error(Errc::bad_value,
                        "bridge input matrices must all be square of one order");

    std::string full = dirs.resolve(path);
    std::ofstream out(full, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(Errc::io, full + ": cannot open for writing");
    out << n << '\n';
    for (const auto& m : mats)
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j)
                    out << ' ';
                out << format_double(m.at(i, j));
            }
            out << '\n';
        }
    out.flush();
    if (!out)
        throw Error(Errc::io, full + ": write failed");
}

std::string format_fixed(double x) {
    if (!std::isfinite(x))
        throw Error(Errc::bad_value, "format_fixed: non-finite value");
    double scaled = std::fabs(x) * 1e6;
    if (scaled >= 9.5e9) // would need more than 10 characters even unsigned
        throw Error(Errc::bad_value, "format_fixed: field overflow");
    long long units = std::llround(scaled); // half away from zero
    long long whole = units / 1000000;
    long long frac = units % 1000000;
    char body[32];
    std::snprintf(body, sizeof body, "%s%lld.%06lld",
                  std::signbit(x) && units != 0 ? "-" : "", whole, frac);
    std::size_t len = std::strlen(body);
    if (len > 10)
        throw Error(Errc::bad_value, "format_fixed: field overflow");
    std::string out(" ");
    out.append(10 - len, ' ');
    out.append(body);
    return out;
}

std::vector<double> tokenize_numbers(const std::string& text) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
            ++i;
        if (i >= text.size())
            break;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
            ++i;
        std::string tok = text.substr(start, i - start);
        const char* first = tok.c_str();
        if (*first == '+')
            ++first;
        double d = 0;
        auto [p, ec] = std::from_chars(first, tok.c_str() + tok.size(), d);
        if (ec != std::errc() || p != tok.c_str() + tok.size())
            throw Error(Errc::bad_value, "non-numeric token '" + tok + "'");
        out.push_back(d);
    }
    return out;
}

std::vector<double> run_external(const DirStack& dirs, const ExecSpec& exec,
                                 const std::string& input_path,
                                 double timeout_sec) {
    std::string input = dirs.resolve(input_path);
    if (!fs::exists(input))
        throw Error(Errc::io, input + ": input file does not exist");

    // relative executable paths resolve against the directory stack top
    std::string prog = dirs.resolve(exec.path);

    std::vector<std::string> argv{prog};
    argv.insert(argv.end(), exec.args.begin(), exec.args.end());
    CaptureResult res = run_capture(argv, input, dirs.current(), timeout_sec);
    if (!WIFEXITED(res.exit_status) || WEXITSTATUS(res.exit_status) != 0) {
        std::string how = WIFEXITED(res.exit_status)
                              ? "exit status " + std::to_string(WEXITSTATUS(res.exit_status))
                              : "abnormal termination";
        throw Error(Errc::spawn, exec.name + ": " + how);
    }
    return tokenize_numbers(res.output);
}

Matrix parse_square(const std::vector<double>& tokens, std::int64_t n) {
    if (n <= 0)
        throw Error(Errc::bad_value, "parse_square: order must be positive");
    auto un = static_cast<std::size_t>(n);
    if (tokens.size() != un * un)
        throw Error(Errc::bad_value,
                    "parse_square: expected " + std::to_string(un * un) +
                        " tokens, got " + std::to_string(tokens.size()));
    Matrix m(un, un);
    for (std::size_t i = 0; i < un; ++i)
        for (std::size_t j = 0; j < un; ++j)
            m.at(i, j) = tokens[i * un + j];
    return m;
}

Spectrum bridge_pipeline(DirStack& dirs, std::int64_t ns,
                           const ExecSpec& exec, double timeout_sec) {
    if (ns <= 0)
        throw Error(Errc::bad_value, "pipeline order must be positive");
    Matrix mat1 = build_fill(ns, 0.0, 1.213);
    Matrix mat2 = build_fill(ns, 0.0, 2.079);
    const std::string input_name = "bridge_input.dat";
    write_bridge_input(dirs, input_name, {mat1, mat2});
    std::vector<double> tokens = run_external(dirs, exec, input_name, timeout_sec);
    Matrix product = parse_square(tokens, ns);
    return eigenvalues(product);
}

int bridge_worker_stdio() {
    std::string text((std::istreambuf_iterator<char>(std::cin)),
                     std::istreambuf_iterator<char>());
    std::vector<double> tokens;
    try {
        tokens = tokenize_numbers(text);
    } catch (const Error& e) {
        std::cerr << "bridge worker: " << e.what() << "\n";
        return 1;
    }
    if (tokens.empty()) {
        std::cerr << "bridge worker: empty input\n";
        return 1;
    }
    double order = tokens[0];
    if (order < 1 || order != std::floor(order)) {
        std::cerr << "bridge worker: bad matrix order\n";
        return 1;
    }
    auto n = static_cast<std::size_t>(order);
    if (tokens.size() != 1 + 2 * n * n) {
        std::cerr << "bridge worker: expected " << 1 + 2 * n * n
                  << " tokens, got " << tokens.size() << "\n";
        return 1;
    }
    Matrix a(n, n), b(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            a.at(i, j) = tokens[1 + i * n + j];
            b.at(i, j) = tokens[1 + n * n + i * n + j];
        }
    Matrix c = matmul(a, b);
    std::string out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            out += format_fixed(c.at(i, j));
            out += '\n';
        }
    std::cout << out << std::flush;
    return 0;
}

} // namespace kfarm
