#include "farm.hpp"

#include <unistd.h>

#include <cstdlib>
#include <iostream>

#include "matrix.hpp"
#include "version.hpp"

namespace kfarm {

FarmConfig FarmConfig::defaults() {
    FarmConfig cfg;
    cfg.local_worker_argv = {self_exe_path(), "worker"};
    if (const char* env_cmd = std::getenv("KFARM_WORKER_CMD"))
        cfg.remote_worker_cmd = env_cmd;
    else
        cfg.remote_worker_cmd = "kfarm worker";
    return cfg;
}

Directive Directive::eval(std::string task_expr) {
    return Directive{Kind::eval, std::move(task_expr), {}};
}

Directive Directive::exp(std::string file, std::string task_expr) {
    return Directive{Kind::exp, std::move(task_expr), std::move(file)};
}

Directive Directive::read(std::string file) {
    return Directive{Kind::read, {}, std::move(file)};
}

// ------------------------------------------------------------ SlaveHandle

SlaveHandle::SlaveHandle(int processor_id, std::string host, bool via_ssh,
                         ChildProcess child)
    : processor_id_(processor_id), host_(std::move(host)), via_ssh_(via_ssh),
      child_(child), reader_(child.stdout_fd) {}

SlaveHandle::~SlaveHandle() {
    close_fds();
    if (child_.pid > 0 && !wait_exit(child_.pid, 0.2))
        kill_hard(child_.pid);
}

void SlaveHandle::set_ready(Value info) {
    info_ = std::move(info);
    state_.store(SlaveState::ready);
}

void SlaveHandle::close_fds() {
    if (child_.stdin_fd >= 0) {
        close(child_.stdin_fd);
        child_.stdin_fd = -1;
    }
    if (child_.stdout_fd >= 0) {
        close(child_.stdout_fd);
        child_.stdout_fd = -1;
    }
}

void SlaveHandle::send(const Message& request) {
    if (state_.load() == SlaveState::closed)
        throw Error(Errc::state, "slave " + std::to_string(processor_id_) +
                                     " is closed");
    if (child_.stdin_fd < 0)
        throw Error(Errc::state, "slave " + std::to_string(processor_id_) +
                                     " has no connection");
    try {
        write_all(child_.stdin_fd, encode(request));
    } catch (const Error&) {
        mark_failed();
        throw;
    }
}

Message SlaveHandle::receive(double timeout_sec) {
    std::vector<std::string> lines;
    try {
        for (;;) {
            auto line = reader_.read_line(timeout_sec);
            if (!line) {
                mark_failed();
                throw Error(Errc::protocol,
                            "slave " + std::to_string(processor_id_) +
                                ": connection lost");
            }
            lines.push_back(*line);
            if (*line == ">END")
                break;
        }
        return decode(lines);
    } catch (const Error& e) {
        if (e.code() == Errc::timeout || e.code() == Errc::io)
            mark_failed();
        throw;
    }
}

Message SlaveHandle::roundtrip(const Message& request, double timeout_sec) {
    send(request);
    Message response = receive(timeout_sec);
    if (response.id != request.id) {
        mark_failed();
        throw Error(Errc::protocol,
                    "slave " + std::to_string(processor_id_) +
                        ": response id mismatch");
    }
    return response;
}

// ------------------------------------------------------------------- Farm

Farm::Farm(FarmConfig config, std::optional<std::uint64_t> seed)
    : config_(std::move(config)),
      rng_(seed ? Rng(*seed) : Rng::from_entropy()) {
    ignore_sigpipe();
}

Farm::~Farm() {
    try {
        close_slaves();
    } catch (...) {
    }
}

SlaveHandle& Farm::launch_local() {
    return launch("localhost", false, config_.local_worker_argv);
}

SlaveHandle& Farm::launch_ssh(const std::string& host) {
    std::vector<std::string> argv{"ssh", "-e", "none", host,
                                  config_.remote_worker_cmd};
    return launch(host, true, argv);
}

SlaveHandle& Farm::launch(const std::string& host, bool via_ssh,
                          const std::vector<std::string>& argv) {
    ChildProcess child = spawn_piped(argv);
    auto handle = std::make_unique<SlaveHandle>(0, host, via_ssh, child);

    Value info;
    try {
        Message response = handle->roundtrip(
            Message::request(handle->next_request_id(), Command::info),
            config_.handshake_timeout);
        if (response.kind != MsgKind::ok || response.payload.size() != 1)
            throw Error(Errc::protocol, "bad INFO reply");
        info = parse_value(response.payload[0]);
        bool well_formed = info.is_list() && info.as_list().size() == 4 &&
                           info.as_list()[0].is_text() &&
                           info.as_list()[1].is_text() &&
                           info.as_list()[2].is_integer() &&
                           info.as_list()[3].is_text();
        if (!well_formed)
            throw Error(Errc::protocol, "bad INFO value");
    } catch (const std::exception& e) {
        kill_hard(child.pid);
        throw Error(Errc::spawn,
                    "handshake with " + host + " failed: " + e.what());
    }
    const std::string& version = info.as_list()[3].as_text();
    std::string expect = "protocol " + std::to_string(kProtocolVersion);
    if (version.find(expect) == std::string::npos)
        std::cerr << "kfarm: warning: slave on " << host
                  << " reports version '" << version << "', expected "
                  << expect << "\n";

    std::lock_guard<std::mutex> lock(registry_mutex_);
    handle->set_processor_id(next_processor_id_++);
    handle->set_ready(std::move(info));
    slaves_.push_back(std::move(handle));
    return *slaves_.back();
}

std::size_t Farm::live_count() const {
    std::lock_guard<std::mutex> lock(registry_mutex_);
    std::size_t n = 0;
    for (const auto& s : slaves_)
        if (s->state() == SlaveState::ready)
            ++n;
    return n;
}

std::vector<SlaveHandle*> Farm::live_slaves() const {
    std::lock_guard<std::mutex> lock(registry_mutex_);
    std::vector<SlaveHandle*> out;
    for (const auto& s : slaves_)
        if (s->state() == SlaveState::ready)
            out.push_back(s.get());
    return out;
}

SlaveHandle* Farm::slave(int processor_id) const {
    std::lock_guard<std::mutex> lock(registry_mutex_);
    for (const auto& s : slaves_)
        if (s->processor_id() == processor_id)
            return s.get();
    return nullptr;
}

Value Farm::info_table() {
    Value::List rows;
    rows.push_back(Value::list({Value::text("ID"), Value::text("host"),
                                Value::text("OS"), Value::text("process"),
                                Value::text("Version")}));
    for (SlaveHandle* s : live_slaves()) {
        Value::List row{Value::integer(s->processor_id())};
        try {
            Message resp = s->roundtrip(
                Message::request(s->next_request_id(), Command::info),
                config_.handshake_timeout);
            if (resp.kind != MsgKind::ok || resp.payload.size() != 1)
                throw Error(Errc::protocol, "bad INFO reply");
            Value info = parse_value(resp.payload[0]);
            const auto& f = info.as_list();
            row.push_back(f[0]); // machine name
            row.push_back(f[1]); // system id
            row.push_back(f[2]); // remote pid
            row.push_back(f[3]); // version
        } catch (const std::exception&) {
            row.resize(1);
            row.push_back(Value::text("(error)"));
            row.push_back(Value::text("(error)"));
            row.push_back(Value::integer(0));
            row.push_back(Value::text("(error)"));
        }
        rows.push_back(Value::list(std::move(row)));
    }
    return Value::list(std::move(rows));
}

std::vector<std::pair<int, std::string>> Farm::export_environment() {
    std::vector<std::pair<int, std::string>> failures;
    for (SlaveHandle* s : live_slaves()) {
        for (const auto& [name, value] : env_.bindings()) {
            try {
                Message resp = s->roundtrip(
                    Message::request(s->next_request_id(), Command::setg, name,
                                     {print_value(value)}),
                    config_.eval_timeout);
                if (resp.kind != MsgKind::ok)
                    throw Error(Errc::protocol, "SETG " + name + " rejected: " +
                                                    resp.code);
            } catch (const std::exception& e) {
                failures.emplace_back(s->processor_id(), e.what());
                break; // skip the rest of this slave, continue with others
            }
        }
    }
    return failures;
}

namespace {

Message directive_request(SlaveHandle& handle, const Directive& d) {
    switch (d.kind) {
    case Directive::Kind::eval:
        return Message::request(handle.next_request_id(), Command::eval, {},
                                {d.task});
    case Directive::Kind::exp:
        return Message::request(handle.next_request_id(), Command::exp, d.file,
                                {d.task});
    case Directive::Kind::read:
        return Message::request(handle.next_request_id(), Command::read,
                                d.file);
    }
    throw Error(Errc::bad_value, "bad directive");
}

Value response_value(const Message& response) {
    if (response.kind == MsgKind::error)
        throw Error(Errc::protocol, "slave error: " + response.code);
    if (response.payload.empty())
        return Value::list({});
    return parse_value(response.payload[0]);
}

} // namespace

Value Farm::remote_evaluate(SlaveHandle& handle, const Directive& directive) {
    if (handle.state() != SlaveState::ready)
        throw Error(Errc::state,
                    "slave " + std::to_string(handle.processor_id()) +
                        " is not ready");
    Message response =
        handle.roundtrip(directive_request(handle, directive),
                         config_.eval_timeout);
    return response_value(response);
}

Value Farm::pipeline_parallel(std::int64_t ns) {
    if (ns <= 0)
        throw Error(Errc::bad_value, "pipeline order must be positive");
    auto live = live_slaves();
    if (live.size() < 2)
        throw Error(Errc::state, "pipeline needs at least two ready slaves");
    SlaveHandle& s1 = *live[0];
    SlaveHandle& s2 = *live[1];

    auto stage = [](const std::string& name, const std::exception& e) {
        return Error(Errc::state, name + ": " + e.what());
    };

    env_.bind("ns", Value::integer(ns));
    auto failures = export_environment();
    if (!failures.empty())
        throw Error(Errc::state,
                    "export-environment: slave " +
                        std::to_string(failures.front().first) + ": " +
                        failures.front().second);

    Matrix mat1 = build_tridiag(ns, 0.0, 1.2, 2.1);

    // both EXPORT requests go out before either response is awaited, so the
    // two slaves build their factors concurrently
    try {
        Message req1 = Message::request(s1.next_request_id(), Command::exp,
                                        "data1.dat", {"tridiag[ns, 0, 2.6, 1.8]"});
        Message req2 = Message::request(s2.next_request_id(), Command::exp,
                                        "data2.dat", {"tridiag[ns, 0, 2, 3]"});
        s1.send(req1);
        s2.send(req2);
        Message resp1 = s1.receive(config_.eval_timeout);
        Message resp2 = s2.receive(config_.eval_timeout);
        response_value(resp1);
        response_value(resp2);
    } catch (const std::exception& e) {
        throw stage("build-export", e);
    }

    Value flat2, flat3;
    try {
        s1.send(Message::request(s1.next_request_id(), Command::read, "data1.dat"));
        s2.send(Message::request(s2.next_request_id(), Command::read, "data2.dat"));
        flat2 = response_value(s1.receive(config_.eval_timeout));
        flat3 = response_value(s2.receive(config_.eval_timeout));
    } catch (const std::exception& e) {
        throw stage("read-back", e);
    }

    try {
        Matrix mat2 = matrix_from_value(partition(flat2, ns));
        Matrix mat3 = matrix_from_value(partition(flat3, ns));
        Matrix mat4 = matmul(matmul(mat1, mat2), mat3);
        return chop(spectrum_to_value(eigenvalues(mat4)), 1e-10);
    } catch (const std::exception& e) {
        throw stage("assemble", e);
    }
}

std::vector<std::string> Farm::close_slaves() {
    std::vector<std::unique_ptr<SlaveHandle>> taken;
    {
        std::lock_guard<std::mutex> lock(registry_mutex_);
        taken.swap(slaves_);
    }
    std::vector<std::string> reports;
    for (auto& s : taken) {
        if (s->state() == SlaveState::failed) {
            reports.push_back("slave " + std::to_string(s->processor_id()) +
                              " had already failed");
            s->close_fds();
            if (!wait_exit(s->pid(), 0.5)) {
                kill_hard(s->pid());
                reports.push_back("slave " + std::to_string(s->processor_id()) +
                                  " force-killed");
            }
            s->mark_failed();
            continue;
        }
        if (s->state() != SlaveState::ready) {
            s->close_fds();
            continue;
        }
        try {
            s->roundtrip(Message::request(s->next_request_id(), Command::close),
                         config_.close_grace);
        } catch (const std::exception& e) {
            reports.push_back("slave " + std::to_string(s->processor_id()) +
                              ": close failed: " + e.what());
        }
        s->close_fds();
        if (!wait_exit(s->pid(), config_.close_grace)) {
            kill_hard(s->pid());
            reports.push_back("slave " + std::to_string(s->processor_id()) +
                              " force-killed");
        }
        s->mark_closed();
    }
    return reports;
}

} // namespace kfarm
