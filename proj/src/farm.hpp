#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "proc.hpp"
#include "protocol.hpp"

namespace kfarm {

struct FarmConfig {
    // command used for local slaves; defaults to this executable's own
    // `worker` subcommand
    std::vector<std::string> local_worker_argv;
    // command string handed to `ssh -e none <host> ...`; overridable via
    // the KFARM_WORKER_CMD environment variable
    std::string remote_worker_cmd;
    double handshake_timeout = 10.0;
    double eval_timeout = 60.0;
    double close_grace = 5.0;

    static FarmConfig defaults();
};

enum class SlaveState { launching, ready, closed, failed };

// What remote_evaluate sends: a task to run, a task whose result the slave
// exports to a file in its working directory, or a numeric file to read back.
struct Directive {
    enum class Kind { eval, exp, read } kind;
    std::string task; // eval and exp
    std::string file; // exp and read

    static Directive eval(std::string task_expr);
    static Directive exp(std::string file, std::string task_expr);
    static Directive read(std::string file);
};

// A launched worker kernel. processor ids are assigned 1,2,3,... in launch
// order and never reused within a farm. One outstanding request per handle;
// distinct handles may be driven from different threads concurrently.
class SlaveHandle {
public:
    SlaveHandle(int processor_id, std::string host, bool via_ssh,
                ChildProcess child);
    ~SlaveHandle();

    SlaveHandle(const SlaveHandle&) = delete;
    SlaveHandle& operator=(const SlaveHandle&) = delete;

    int processor_id() const { return processor_id_; }
    const std::string& host() const { return host_; }
    bool via_ssh() const { return via_ssh_; }
    SlaveState state() const { return state_.load(); }
    pid_t pid() const { return child_.pid; }
    const Value& info() const { return info_; }

    void send(const Message& request);
    Message receive(double timeout_sec);
    Message roundtrip(const Message& request, double timeout_sec);

    std::uint64_t next_request_id() { return next_id_++; }

    void mark_failed() { state_.store(SlaveState::failed); }
    void mark_closed() { state_.store(SlaveState::closed); }
    void set_ready(Value info);
    void set_processor_id(int id) { processor_id_ = id; }
    void close_fds();

private:
    int processor_id_;
    std::string host_;
    bool via_ssh_;
    ChildProcess child_;
    LineReader reader_;
    std::atomic<SlaveState> state_{SlaveState::launching};
    std::uint64_t next_id_ = 1;
    Value info_;
};

// Master-side farm: registry of slaves, the master environment and
// generator, and the scatter/gather pipeline.
class Farm {
public:
    explicit Farm(FarmConfig config = FarmConfig::defaults(),
                  std::optional<std::uint64_t> seed = std::nullopt);
    ~Farm();

    Env& env() { return env_; }
    Rng& rng() { return rng_; }
    FarmConfig& config() { return config_; }
    const FarmConfig& config() const { return config_; }

    // Spawns a worker, performs the INFO handshake and registers the
    // handle. Throws on spawn/handshake failure, leaving the registry
    // unchanged.
    SlaveHandle& launch_local();
    SlaveHandle& launch_ssh(const std::string& host);

    std::size_t live_count() const;
    std::vector<SlaveHandle*> live_slaves() const;
    SlaveHandle* slave(int processor_id) const;

    // {header, row...} with rows {ID, host, OS, process, Version}; a slave
    // that fails the INFO query contributes an in-row error marker.
    Value info_table();

    // One-shot SETG of every master binding to every live slave; returns
    // per-slave failures (id, message) without aborting the rest.
    std::vector<std::pair<int, std::string>> export_environment();

    // Sends the directive, blocks for the paired response and returns the
    // payload value. Slave error codes surface as Errc::protocol errors
    // carrying the code verbatim; a lost connection marks the handle failed.
    Value remote_evaluate(SlaveHandle& handle, const Directive& directive);

    // The three-matrix scatter/gather pipeline: builds one factor locally,
    // has the first two slaves build and export the other two, reads them
    // back and returns chop(eigenvalues(product), 1e-10) as a value.
    Value pipeline_parallel(std::int64_t ns);

    // CLOSE to every live slave, wait for exit (grace period, then kill).
    // Returns human-readable reports for anything that went sideways.
    std::vector<std::string> close_slaves();

private:
    SlaveHandle& launch(const std::string& host, bool via_ssh,
                        const std::vector<std::string>& argv);

    FarmConfig config_;
    Env env_;
    Rng rng_;
    mutable std::mutex registry_mutex_;
    std::vector<std::unique_ptr<SlaveHandle>> slaves_;
    int next_processor_id_ = 1;
};

} // namespace kfarm
