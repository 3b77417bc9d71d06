#include "batch.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "eps.hpp"
#include "proc.hpp"

namespace kfarm {

// ----------------------------------------------------------------- parsing

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

[[noreturn]] void line_error(int line_no, const std::string& what) {
    throw Error(Errc::parse,
                "line " + std::to_string(line_no) + ": " + what);
}

// export_eps["path", ident]
void parse_export_eps(Statement& stmt, std::string_view body) {
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i])))
            ++i;
    };
    skip_ws();
    if (i >= body.size() || body[i] != '[')
        line_error(stmt.line_no, "expected '[' after export_eps");
    ++i;
    skip_ws();
    if (i >= body.size() || body[i] != '"')
        line_error(stmt.line_no, "export_eps: expected a quoted path");
    ++i;
    std::string path;
    while (i < body.size() && body[i] != '"') {
        if (body[i] == '\\' && i + 1 < body.size())
            ++i;
        path += body[i++];
    }
    if (i >= body.size())
        line_error(stmt.line_no, "export_eps: unterminated path string");
    ++i;
    skip_ws();
    if (i >= body.size() || body[i] != ',')
        line_error(stmt.line_no, "export_eps: expected ',' after the path");
    ++i;
    skip_ws();
    std::size_t s = i;
    while (i < body.size() &&
           (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '_'))
        ++i;
    std::string ident(body.substr(s, i - s));
    if (!is_identifier(ident))
        line_error(stmt.line_no, "export_eps: expected a figure identifier");
    skip_ws();
    if (i >= body.size() || body[i] != ']')
        line_error(stmt.line_no, "export_eps: expected ']'");
    ++i;
    if (!trim(body.substr(i)).empty())
        line_error(stmt.line_no, "export_eps: trailing input");
    stmt.kind = Statement::Kind::export_eps;
    stmt.path = std::move(path);
    stmt.figure = std::move(ident);
}

void parse_rhs(Statement& stmt, std::string_view rhs) {
    rhs = trim(rhs);
    if (rhs.empty())
        line_error(stmt.line_no, "assignment without a right-hand side");
    try {
        if (std::isalpha(static_cast<unsigned char>(rhs.front())))
            stmt.task = parse_task(rhs);
        else
            stmt.literal = parse_value(rhs);
    } catch (const ParseError& e) {
        line_error(stmt.line_no, e.what());
    }
}

Statement parse_statement(int line_no, const std::string& raw) {
    Statement stmt;
    stmt.line_no = line_no;
    stmt.raw = raw;

    std::string_view body = trim(raw);
    if (body.empty()) {
        stmt.kind = Statement::Kind::blank;
        return stmt;
    }
    if (body.front() == '#') {
        stmt.kind = Statement::Kind::comment;
        return stmt;
    }
    if (body == "echo stdout") {
        stmt.kind = Statement::Kind::echo_on;
        return stmt;
    }
    if (!std::isalpha(static_cast<unsigned char>(body.front())))
        line_error(line_no, "statement must start with an identifier");

    std::size_t i = 0;
    while (i < body.size() &&
           (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '_'))
        ++i;
    std::string head(body.substr(0, i));
    std::size_t after = i;
    while (after < body.size() &&
           std::isspace(static_cast<unsigned char>(body[after])))
        ++after;

    if (after < body.size() && body[after] == '=') {
        stmt.kind = Statement::Kind::assign;
        stmt.target = head;
        parse_rhs(stmt, body.substr(after + 1));
        return stmt;
    }
    if (head == "export_eps") {
        parse_export_eps(stmt, body.substr(i));
        return stmt;
    }
    stmt.kind = Statement::Kind::bare;
    try {
        stmt.task = parse_task(body);
    } catch (const ParseError& e) {
        line_error(line_no, e.what());
    }
    return stmt;
}

} // namespace

Script parse_script(const std::string& text) {
    Script script;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        ++line_no;
        script.statements.push_back(parse_statement(line_no, line));
    }
    return script;
}

Script parse_script_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::io, path + ": cannot open script");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_script(ss.str());
}

// ----------------------------------------------------------------- running

namespace {

Value eval_rhs(const Statement& stmt, const Env& env, Rng& rng) {
    if (stmt.literal)
        return *stmt.literal;
    // a bare bound identifier on the right-hand side is a global reference
    if (stmt.task->args.empty() && !is_known_task(stmt.task->name))
        if (const Value* bound = env.find(stmt.task->name))
            return *bound;
    return eval_task(*stmt.task, env, rng);
}

void write_eps_file(const std::string& path, const Value& figure) {
    std::string eps = render_eps(plot_from_value(figure));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(Errc::io, path + ": cannot open for writing");
    out << eps;
    out.flush();
    if (!out)
        throw Error(Errc::io, path + ": write failed");
}

} // namespace

int run_script(const Script& script, std::ostream& sink, Env& env, Rng& rng) {
    auto t0 = std::chrono::steady_clock::now();
    bool echo = false;
    for (const auto& stmt : script.statements) {
        if (stmt.kind == Statement::Kind::echo_on)
            echo = true;
        if (echo)
            sink << stmt.raw << '\n';
        try {
            switch (stmt.kind) {
            case Statement::Kind::blank:
            case Statement::Kind::comment:
            case Statement::Kind::echo_on:
                break;
            case Statement::Kind::assign:
                env.bind(stmt.target, eval_rhs(stmt, env, rng));
                break;
            case Statement::Kind::bare: {
                std::string printed =
                    print_value(eval_task(*stmt.task, env, rng));
                sink << "=> " << printed << '\n';
                break;
            }
            case Statement::Kind::export_eps: {
                const Value* figure = env.find(stmt.figure);
                if (!figure)
                    throw Error(Errc::unbound,
                                "unbound identifier '" + stmt.figure + "'");
                write_eps_file(stmt.path, *figure);
                break;
            }
            }
        } catch (const Error& e) {
            sink << "!! " << stmt.line_no << ": " << protocol_code(e.code())
                 << " " << e.what() << '\n';
            sink.flush();
            return 1;
        } catch (const std::exception& e) {
            sink << "!! " << stmt.line_no << ": " << kErrBadValue << " "
                 << e.what() << '\n';
            sink.flush();
            return 1;
        }
    }
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    char footer[64];
    std::snprintf(footer, sizeof footer, "## elapsed %.3f", dt.count());
    sink << footer << '\n';
    sink.flush();
    return 0;
}

// ---------------------------------------------------------------- detached

const char* job_state_name(JobRecord::State s) {
    switch (s) {
    case JobRecord::State::running: return "running";
    case JobRecord::State::done: return "done";
    case JobRecord::State::failed: return "failed";
    }
    return "?";
}

JobRecord submit_detached(const std::string& script_path,
                          const std::string& output_path,
                          std::optional<std::uint64_t> seed) {
    Script script = parse_script_file(script_path); // reject before spawning

    // create/truncate the output up front so a status query never races
    // against the job's first write
    int out_fd = open(output_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (out_fd < 0)
        throw Error(Errc::io, output_path + ": " + std::strerror(errno));

    int sync_pipe[2];
    if (pipe(sync_pipe) != 0) {
        close(out_fd);
        throw Error(Errc::spawn, std::string("pipe: ") + std::strerror(errno));
    }

    // empty stdio buffers so the job does not inherit and replay them
    std::cout.flush();
    std::cerr.flush();
    fflush(nullptr);

    pid_t mid = fork();
    if (mid < 0) {
        close(out_fd);
        close(sync_pipe[0]);
        close(sync_pipe[1]);
        throw Error(Errc::spawn, std::string("fork: ") + std::strerror(errno));
    }
    if (mid == 0) {
        // intermediate: new session, then the real job as a grandchild so
        // the job is not our caller's child and survives its exit
        setsid();
        pid_t job = fork();
        if (job != 0)
            _exit(job < 0 ? 1 : 0);

        close(sync_pipe[0]);
        dup2(out_fd, STDOUT_FILENO);
        dup2(out_fd, STDERR_FILENO);
        close(out_fd);
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) {
            dup2(devnull, STDIN_FILENO);
            close(devnull);
        }

        std::string pid_path = output_path + ".pid";
        pid_t self = getpid();
        {
            std::ofstream pf(pid_path, std::ios::trunc);
            pf << self << "\n";
        }
        // ready: hand the submitter our pid and let it return
        (void)!write(sync_pipe[1], &self, sizeof self);
        close(sync_pipe[1]);

        int status = 1;
        try {
            Env env;
            Rng rng = seed ? Rng(*seed) : Rng::from_entropy();
            status = run_script(script, std::cout, env, rng);
        } catch (...) {
            status = 1;
        }
        unlink(pid_path.c_str());
        _exit(status);
    }

    close(out_fd);
    close(sync_pipe[1]);
    // reap the intermediate and wait for the job's ready message
    while (waitpid(mid, nullptr, 0) < 0 && errno == EINTR)
        continue;
    pid_t job_pid = -1;
    ssize_t n;
    do {
        n = read(sync_pipe[0], &job_pid, sizeof job_pid);
    } while (n < 0 && errno == EINTR);
    close(sync_pipe[0]);
    if (n != static_cast<ssize_t>(sizeof job_pid) || job_pid <= 0)
        throw Error(Errc::spawn, "detached job did not start");

    JobRecord record;
    static std::atomic<int> next_job_id{1};
    record.id = next_job_id++;
    record.script_path = script_path;
    record.output_path = output_path;
    record.pid = job_pid;
    record.start = std::chrono::system_clock::now();
    record.state = JobRecord::State::running;
    return record;
}

namespace {

std::optional<pid_t> read_pid_file(const std::string& output_path) {
    std::ifstream pf(output_path + ".pid");
    if (!pf)
        return std::nullopt;
    long pid = 0;
    pf >> pid;
    if (!pf || pid <= 0)
        return std::nullopt;
    return static_cast<pid_t>(pid);
}

} // namespace

JobRecord::State job_status(JobRecord& record) {
    std::ifstream in(record.output_path, std::ios::binary);
    if (!in) {
        record.state = JobRecord::State::failed;
        return record.state;
    }
    static const std::regex footer_re(R"(^## elapsed ([0-9]+\.[0-9]{3})$)");
    std::string line, last;
    bool error_line = false;
    while (std::getline(in, line)) {
        if (line.rfind("!! ", 0) == 0)
            error_line = true;
        if (!line.empty())
            last = line;
    }
    std::smatch m;
    if (!error_line && std::regex_match(last, m, footer_re)) {
        record.state = JobRecord::State::done;
        record.elapsed = std::stod(m[1].str());
        return record.state;
    }
    if (error_line) {
        record.state = JobRecord::State::failed;
        return record.state;
    }
    auto pid = read_pid_file(record.output_path);
    if (!pid)
        pid = record.pid > 0 ? std::optional<pid_t>(record.pid) : std::nullopt;
    if (pid && pid_alive(*pid)) {
        record.state = JobRecord::State::running;
        return record.state;
    }
    record.state = JobRecord::State::failed;
    return record.state;
}

JobRecord job_from_output(const std::string& output_path) {
    JobRecord record;
    record.output_path = output_path;
    if (auto pid = read_pid_file(output_path))
        record.pid = *pid;
    job_status(record);
    return record;
}

} // namespace kfarm
