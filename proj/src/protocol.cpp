#include "protocol.hpp"

#include <sys/utsname.h>
#include <unistd.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "eps.hpp"
#include "matrix.hpp"
#include "version.hpp"

namespace fs = std::filesystem;

namespace kfarm {

// ---------------------------------------------------------------- framing

const char* command_name(Command c) {
    switch (c) {
    case Command::info: return "INFO";
    case Command::setg: return "SETG";
    case Command::eval: return "EVAL";
    case Command::exp: return "EXPORT";
    case Command::read: return "READ";
    case Command::close: return "CLOSE";
    }
    return "?";
}

std::optional<Command> command_from(std::string_view name) {
    if (name == "INFO") return Command::info;
    if (name == "SETG") return Command::setg;
    if (name == "EVAL") return Command::eval;
    if (name == "EXPORT") return Command::exp;
    if (name == "READ") return Command::read;
    if (name == "CLOSE") return Command::close;
    return std::nullopt;
}

Message Message::request(std::uint64_t id, Command cmd, std::string arg,
                         std::vector<std::string> payload) {
    Message m;
    m.kind = MsgKind::request;
    m.id = id;
    m.command = cmd;
    m.arg = std::move(arg);
    m.payload = std::move(payload);
    return m;
}

Message Message::ok(std::uint64_t id, std::vector<std::string> payload) {
    Message m;
    m.kind = MsgKind::ok;
    m.id = id;
    m.payload = std::move(payload);
    return m;
}

Message Message::error(std::uint64_t id, std::string code) {
    Message m;
    m.kind = MsgKind::error;
    m.id = id;
    m.code = std::move(code);
    return m;
}

std::string encode(const Message& msg) {
    std::string out = ">";
    switch (msg.kind) {
    case MsgKind::request:
        out += "REQ " + std::to_string(msg.id) + " " + command_name(msg.command);
        if (!msg.arg.empty())
            out += " " + msg.arg;
        break;
    case MsgKind::ok:
        out += "OK " + std::to_string(msg.id);
        break;
    case MsgKind::error:
        out += "ERR " + std::to_string(msg.id) + " " + msg.code;
        break;
    }
    out += '\n';
    for (const auto& line : msg.payload) {
        out += '|';
        out += line;
        out += '\n';
    }
    out += ">END\n";
    return out;
}

namespace {

std::uint64_t parse_frame_id(std::string_view tok) {
    std::uint64_t id = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
    if (ec != std::errc() || p != tok.data() + tok.size() || id == 0)
        throw Error(Errc::protocol, "bad frame id '" + std::string(tok) + "'");
    return id;
}

// splits off the next space-separated token
std::string_view next_token(std::string_view& rest) {
    auto sp = rest.find(' ');
    std::string_view tok = rest.substr(0, sp);
    rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
    return tok;
}

Message parse_header(std::string_view line) {
    std::string_view rest = line;
    std::string_view head = next_token(rest);
    if (head == ">REQ") {
        std::uint64_t id = parse_frame_id(next_token(rest));
        std::string_view cmd_tok = next_token(rest);
        auto cmd = command_from(cmd_tok);
        if (!cmd)
            throw Error(Errc::protocol,
                        "unknown command '" + std::string(cmd_tok) + "'");
        return Message::request(id, *cmd, std::string(rest));
    }
    if (head == ">OK")
        return Message::ok(parse_frame_id(next_token(rest)));
    if (head == ">ERR") {
        std::uint64_t id = parse_frame_id(next_token(rest));
        if (rest.empty())
            throw Error(Errc::protocol, "error frame without code");
        return Message::error(id, std::string(rest));
    }
    throw Error(Errc::protocol, "unknown header '" + std::string(line) + "'");
}

} // namespace

Message decode(const std::vector<std::string>& lines) {
    if (lines.empty())
        throw Error(Errc::protocol, "empty frame");
    Message msg = parse_header(lines.front());
    std::size_t i = 1;
    for (; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line == ">END") {
            if (i + 1 != lines.size())
                throw Error(Errc::protocol, "content after frame terminator");
            return msg;
        }
        if (line.empty() || line[0] != '|')
            throw Error(Errc::protocol, "malformed payload line");
        msg.payload.push_back(line.substr(1));
    }
    throw Error(Errc::protocol, "missing frame terminator");
}

const char* protocol_code(Errc c) {
    switch (c) {
    case Errc::io: return kErrIo;
    case Errc::unbound: return kErrUnbound;
    case Errc::bad_task: return kErrBadTask;
    case Errc::protocol: return kErrBadFrame;
    default: return kErrBadValue;
    }
}

// -------------------------------------------------------------- task exprs

TaskExpr parse_task(std::string_view text) {
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
            ++i;
    };
    skip_ws();
    std::size_t start = i;
    while (i < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_'))
        ++i;
    std::string name(text.substr(start, i - start));
    if (!is_identifier(name))
        throw ParseError("expected task name", start);

    TaskExpr expr;
    expr.name = std::move(name);
    skip_ws();
    if (i >= text.size())
        return expr; // bare name, no arguments
    if (text[i] != '[')
        throw ParseError("expected '[' after task name", i);
    ++i;
    skip_ws();
    if (i < text.size() && text[i] == ']') {
        ++i;
    } else {
        for (;;) {
            skip_ws();
            if (i >= text.size())
                throw ParseError("unterminated task call", i);
            char c = text[i];
            if (std::isalpha(static_cast<unsigned char>(c))) {
                std::size_t s = i;
                while (i < text.size() &&
                       (std::isalnum(static_cast<unsigned char>(text[i])) ||
                        text[i] == '_'))
                    ++i;
                expr.args.emplace_back(std::in_place_index<1>,
                                       std::string(text.substr(s, i - s)));
            } else {
                // value literal: delimited by the next top-level ',' or ']'
                std::size_t s = i;
                int depth = 0;
                bool in_string = false;
                for (; i < text.size(); ++i) {
                    char ch = text[i];
                    if (in_string) {
                        if (ch == '\\')
                            ++i;
                        else if (ch == '"')
                            in_string = false;
                        continue;
                    }
                    if (ch == '"')
                        in_string = true;
                    else if (ch == '{')
                        ++depth;
                    else if (ch == '}')
                        --depth;
                    else if ((ch == ',' || ch == ']') && depth == 0)
                        break;
                }
                Value v;
                try {
                    v = parse_value(text.substr(s, i - s));
                } catch (const ParseError& e) {
                    throw ParseError(e.what(), s);
                }
                expr.args.emplace_back(std::in_place_index<0>, std::move(v));
            }
            skip_ws();
            if (i >= text.size())
                throw ParseError("unterminated task call", i);
            if (text[i] == ']') {
                ++i;
                break;
            }
            if (text[i] != ',')
                throw ParseError("expected ',' or ']'", i);
            ++i;
        }
    }
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
    if (i != text.size())
        throw ParseError("trailing input after task call", i);
    return expr;
}

std::string print_task(const TaskExpr& expr) {
    std::string out = expr.name;
    out += '[';
    for (std::size_t i = 0; i < expr.args.size(); ++i) {
        if (i)
            out += ", ";
        if (const Value* v = std::get_if<Value>(&expr.args[i]))
            out += print_value(*v);
        else
            out += std::get<std::string>(expr.args[i]);
    }
    out += ']';
    return out;
}

// -------------------------------------------------------------- evaluation

namespace {

Value resolve_arg(const TaskExpr::Arg& arg, const Env& env) {
    if (const Value* v = std::get_if<Value>(&arg))
        return *v;
    const std::string& name = std::get<std::string>(arg);
    const Value* bound = env.find(name);
    if (!bound)
        throw Error(Errc::unbound, "unbound identifier '" + name + "'");
    return *bound;
}

void need_arity(const TaskExpr& expr, std::size_t lo, std::size_t hi) {
    if (expr.args.size() < lo || expr.args.size() > hi)
        throw Error(Errc::bad_value,
                    expr.name + ": expected " + std::to_string(lo) +
                        (hi != lo ? ".." + std::to_string(hi) : "") +
                        " arguments, got " + std::to_string(expr.args.size()));
}

std::int64_t need_integer(const std::string& task, const Value& v) {
    if (!v.is_integer())
        throw Error(Errc::bad_value, task + ": expected an integer argument");
    return v.as_integer();
}

double need_number(const std::string& task, const Value& v) {
    if (!v.is_number())
        throw Error(Errc::bad_value, task + ": expected a numeric argument");
    return v.number();
}

std::string need_text(const std::string& task, const Value& v) {
    if (!v.is_text())
        throw Error(Errc::bad_value, task + ": expected a string argument");
    return v.as_text();
}

} // namespace

bool is_known_task(const std::string& name) {
    static const char* names[] = {"tridiag", "fill",         "matmul", "dot3",
                                  "eigen",   "random_table", "chop",   "plot"};
    for (const char* n : names)
        if (name == n)
            return true;
    return false;
}

Value eval_task(const TaskExpr& expr, const Env& env, Rng& rng) {
    if (!is_known_task(expr.name))
        throw Error(Errc::bad_task, "unknown task '" + expr.name + "'");

    std::vector<Value> args;
    args.reserve(expr.args.size());
    for (const auto& a : expr.args)
        args.push_back(resolve_arg(a, env));

    const std::string& t = expr.name;
    if (t == "tridiag") {
        need_arity(expr, 4, 4);
        return matrix_to_value(build_tridiag(
            need_integer(t, args[0]), need_number(t, args[1]),
            need_number(t, args[2]), need_number(t, args[3])));
    }
    if (t == "fill") {
        need_arity(expr, 3, 3);
        return matrix_to_value(build_fill(need_integer(t, args[0]),
                                          need_number(t, args[1]),
                                          need_number(t, args[2])));
    }
    if (t == "matmul") {
        need_arity(expr, 2, 2);
        return matrix_to_value(
            matmul(matrix_from_value(args[0]), matrix_from_value(args[1])));
    }
    if (t == "dot3") {
        need_arity(expr, 3, 3);
        return matrix_to_value(matmul(matmul(matrix_from_value(args[0]),
                                             matrix_from_value(args[1])),
                                      matrix_from_value(args[2])));
    }
    if (t == "eigen") {
        need_arity(expr, 1, 1);
        return spectrum_to_value(eigenvalues(matrix_from_value(args[0])));
    }
    if (t == "random_table") {
        need_arity(expr, 1, 1);
        return random_table(need_integer(t, args[0]), rng);
    }
    if (t == "chop") {
        need_arity(expr, 1, 2);
        double tol = expr.args.size() == 2 ? need_number(t, args[1]) : 1e-10;
        return chop(args[0], tol);
    }
    // plot
    need_arity(expr, 3, 3);
    PlotSpec spec;
    spec.joined = true;
    spec.xlabel = need_text(t, args[1]);
    spec.ylabel = need_text(t, args[2]);
    Value fig = Value::list({Value::text("plot"), args[0],
                             Value::text(spec.xlabel), Value::text(spec.ylabel)});
    plot_from_value(fig); // validates the point list
    return fig;
}

// ------------------------------------------------------------ worker loop

Value worker_info_value() {
    char host[256] = "unknown";
    gethostname(host, sizeof host - 1);
    struct utsname un{};
    std::string system_id = "unknown";
    if (uname(&un) == 0)
        system_id = std::string(un.sysname) + "-" + un.machine;
    return Value::list({Value::text(host), Value::text(system_id),
                        Value::integer(getpid()), Value::text(kVersionString)});
}

namespace {

// EXPORT accepts either a task call (evaluated here, so the worker does the
// building) or a plain value literal.
Value export_payload_value(const std::string& line, const Env& env, Rng& rng) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
        ++i;
    if (i < line.size() && std::isalpha(static_cast<unsigned char>(line[i])))
        return eval_task(parse_task(line), env, rng);
    return parse_value(line);
}

void write_exported(const std::string& path, const Value& v) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(Errc::io, path + ": cannot open for writing");
    if (is_matrix_value(v)) {
        // matrix layout: one row per line, entries space-separated
        for (const auto& row : v.as_list()) {
            bool first = true;
            for (const auto& cell : row.as_list()) {
                if (!first)
                    out << ' ';
                out << format_double(cell.number());
                first = false;
            }
            out << '\n';
        }
    } else {
        out << print_value(v) << '\n';
    }
    out.flush();
    if (!out)
        throw Error(Errc::io, path + ": write failed");
}

Value read_numeric_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::io, path + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();

    Value::List out;
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
        Value v;
        try {
            v = parse_value(tok);
        } catch (const ParseError&) {
            throw Error(Errc::bad_value, "non-numeric token '" + tok + "'");
        }
        if (!v.is_number())
            throw Error(Errc::bad_value, "non-numeric token '" + tok + "'");
        out.push_back(std::move(v));
    }
    return Value::list(std::move(out));
}

} // namespace

Message WorkerSession::handle(const Message& request) {
    if (request.kind != MsgKind::request)
        return Message::error(request.id, kErrBadFrame);
    try {
        switch (request.command) {
        case Command::info:
            return Message::ok(request.id, {print_value(worker_info_value())});
        case Command::setg: {
            if (!is_identifier(request.arg))
                throw Error(Errc::bad_value,
                            "SETG: bad identifier '" + request.arg + "'");
            if (request.payload.size() != 1)
                throw Error(Errc::bad_value, "SETG: expected one payload line");
            env_.bind(request.arg, parse_value(request.payload[0]));
            return Message::ok(request.id);
        }
        case Command::eval: {
            if (request.payload.size() != 1)
                throw Error(Errc::bad_value, "EVAL: expected one payload line");
            Value result = eval_task(parse_task(request.payload[0]), env_, rng_);
            return Message::ok(request.id, {print_value(result)});
        }
        case Command::exp: {
            if (request.arg.empty())
                throw Error(Errc::bad_value, "EXPORT: missing file name");
            if (request.payload.size() != 1)
                throw Error(Errc::bad_value, "EXPORT: expected one payload line");
            Value v = export_payload_value(request.payload[0], env_, rng_);
            fs::path p(request.arg);
            if (p.is_relative())
                p = fs::path(work_dir_) / p;
            write_exported(p.string(), v);
            return Message::ok(request.id);
        }
        case Command::read: {
            if (request.arg.empty())
                throw Error(Errc::bad_value, "READ: missing file name");
            fs::path p(request.arg);
            if (p.is_relative())
                p = fs::path(work_dir_) / p;
            return Message::ok(request.id,
                               {print_value(read_numeric_file(p.string()))});
        }
        case Command::close:
            return Message::ok(request.id);
        }
        return Message::error(request.id, kErrBadFrame);
    } catch (const Error& e) {
        return Message::error(request.id, protocol_code(e.code()));
    } catch (const std::exception&) {
        return Message::error(request.id, kErrBadValue);
    }
}

void WorkerSession::serve(std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;

        std::vector<std::string> lines{line};
        bool complete = false;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            lines.push_back(line);
            if (line == ">END") {
                complete = true;
                break;
            }
        }
        if (!complete)
            return; // stream lost mid-frame

        Message request;
        try {
            request = decode(lines);
        } catch (const Error&) {
            // id 0 marks an undecodable frame; the loop keeps serving
            out << encode(Message::error(0, kErrBadFrame)) << std::flush;
            continue;
        }

        Message response = handle(request);
        out << encode(response) << std::flush;
        if (request.kind == MsgKind::request &&
            request.command == Command::close)
            return;
    }
}

} // namespace kfarm
