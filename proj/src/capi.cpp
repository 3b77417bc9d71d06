#include "kfarm.h"

#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <string>

#include "batch.hpp"
#include "bridge.hpp"
#include "farm.hpp"
#include "proc.hpp"
#include "protocol.hpp"
#include "version.hpp"

using namespace kfarm;

namespace {

thread_local std::string g_last_error;

kf_status status_of(Errc c) {
    switch (c) {
    case Errc::parse: return KF_ERR_PARSE;
    case Errc::bad_value: return KF_ERR_BAD_VALUE;
    case Errc::unbound: return KF_ERR_UNBOUND;
    case Errc::bad_task: return KF_ERR_BAD_TASK;
    case Errc::io: return KF_ERR_IO;
    case Errc::spawn: return KF_ERR_SPAWN;
    case Errc::timeout: return KF_ERR_TIMEOUT;
    case Errc::protocol: return KF_ERR_PROTOCOL;
    case Errc::state: return KF_ERR_STATE;
    }
    return KF_ERR_STATE;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out)
        std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn> kf_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        return fn();
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return KF_ERR_STATE;
    } catch (...) {
        g_last_error = "unknown error";
        return KF_ERR_STATE;
    }
}

kf_status usage_error(const char* what) {
    g_last_error = what;
    return KF_ERR_USAGE;
}

} // namespace

struct kf_farm {
    Farm farm;
    explicit kf_farm(FarmConfig cfg, std::optional<std::uint64_t> seed)
        : farm(std::move(cfg), seed) {}
};

extern "C" {

const char* kf_version(void) { return kVersion; }

const char* kf_last_error(void) { return g_last_error.c_str(); }

void kf_string_free(char* s) { std::free(s); }

// ------------------------------------------------------------------- farm

kf_status kf_farm_new(kf_farm** out, const uint64_t* seed) {
    if (!out)
        return usage_error("kf_farm_new: out is null");
    *out = nullptr;
    return guarded([&]() -> kf_status {
        std::optional<std::uint64_t> s;
        if (seed)
            s = *seed;
        *out = new kf_farm(FarmConfig::defaults(), s);
        return KF_OK;
    });
}

void kf_farm_free(kf_farm* farm) { delete farm; }

kf_status kf_farm_set_local_worker(kf_farm* farm, const char* const* argv,
                                   size_t argc) {
    if (!farm || !argv || argc == 0)
        return usage_error("kf_farm_set_local_worker: bad arguments");
    return guarded([&]() -> kf_status {
        std::vector<std::string> cmd(argv, argv + argc);
        farm->farm.config().local_worker_argv = std::move(cmd);
        return KF_OK;
    });
}

kf_status kf_farm_set_remote_cmd(kf_farm* farm, const char* cmd) {
    if (!farm || !cmd || !*cmd)
        return usage_error("kf_farm_set_remote_cmd: bad arguments");
    return guarded([&]() -> kf_status {
        farm->farm.config().remote_worker_cmd = cmd;
        return KF_OK;
    });
}

kf_status kf_farm_set_timeout(kf_farm* farm, double seconds) {
    if (!farm || seconds <= 0)
        return usage_error("kf_farm_set_timeout: bad arguments");
    return guarded([&]() -> kf_status {
        farm->farm.config().eval_timeout = seconds;
        return KF_OK;
    });
}

kf_status kf_farm_launch_local(kf_farm* farm, int* out_id) {
    if (!farm)
        return usage_error("kf_farm_launch_local: farm is null");
    return guarded([&]() -> kf_status {
        SlaveHandle& h = farm->farm.launch_local();
        if (out_id)
            *out_id = h.processor_id();
        return KF_OK;
    });
}

kf_status kf_farm_launch_ssh(kf_farm* farm, const char* host, int* out_id) {
    if (!farm || !host || !*host)
        return usage_error("kf_farm_launch_ssh: bad arguments");
    return guarded([&]() -> kf_status {
        SlaveHandle& h = farm->farm.launch_ssh(host);
        if (out_id)
            *out_id = h.processor_id();
        return KF_OK;
    });
}

kf_status kf_farm_count(kf_farm* farm, int* out_count) {
    if (!farm || !out_count)
        return usage_error("kf_farm_count: bad arguments");
    return guarded([&]() -> kf_status {
        *out_count = static_cast<int>(farm->farm.live_count());
        return KF_OK;
    });
}

kf_status kf_farm_info_table(kf_farm* farm, char** out_table) {
    if (!farm || !out_table)
        return usage_error("kf_farm_info_table: bad arguments");
    return guarded([&]() -> kf_status {
        Value table = farm->farm.info_table();
        std::string text;
        for (const auto& row : table.as_list()) {
            text += print_value(row);
            text += '\n';
        }
        *out_table = dup_string(text);
        return *out_table ? KF_OK : KF_ERR_STATE;
    });
}

kf_status kf_farm_set_global(kf_farm* farm, const char* ident,
                             const char* value_text) {
    if (!farm || !ident || !value_text)
        return usage_error("kf_farm_set_global: bad arguments");
    return guarded([&]() -> kf_status {
        if (!is_identifier(ident))
            throw Error(Errc::bad_value,
                        std::string("bad identifier '") + ident + "'");
        farm->farm.env().bind(ident, parse_value(value_text));
        return KF_OK;
    });
}

kf_status kf_farm_export_env(kf_farm* farm) {
    if (!farm)
        return usage_error("kf_farm_export_env: farm is null");
    return guarded([&]() -> kf_status {
        auto failures = farm->farm.export_environment();
        if (!failures.empty())
            throw Error(Errc::protocol,
                        "slave " + std::to_string(failures.front().first) +
                            ": " + failures.front().second);
        return KF_OK;
    });
}

kf_status kf_farm_eval(kf_farm* farm, int processor_id, const char* task,
                       char** out_value) {
    if (!farm || !task || !out_value)
        return usage_error("kf_farm_eval: bad arguments");
    return guarded([&]() -> kf_status {
        SlaveHandle* handle = farm->farm.slave(processor_id);
        if (!handle)
            throw Error(Errc::state,
                        "no slave with id " + std::to_string(processor_id));
        Value v = farm->farm.remote_evaluate(*handle, Directive::eval(task));
        *out_value = dup_string(print_value(v));
        return *out_value ? KF_OK : KF_ERR_STATE;
    });
}

kf_status kf_farm_pipeline(kf_farm* farm, int64_t ns, char** out_value) {
    if (!farm || !out_value)
        return usage_error("kf_farm_pipeline: bad arguments");
    return guarded([&]() -> kf_status {
        Value v = farm->farm.pipeline_parallel(ns);
        *out_value = dup_string(print_value(v));
        return *out_value ? KF_OK : KF_ERR_STATE;
    });
}

kf_status kf_farm_close(kf_farm* farm) {
    if (!farm)
        return usage_error("kf_farm_close: farm is null");
    return guarded([&]() -> kf_status {
        for (const auto& report : farm->farm.close_slaves())
            std::cerr << "kfarm: " << report << "\n";
        return KF_OK;
    });
}

// ----------------------------------------------------------------- worker

kf_status kf_worker_serve_stdio(const uint64_t* seed) {
    return guarded([&]() -> kf_status {
        namespace fs = std::filesystem;
        std::string tmpl =
            (fs::temp_directory_path() / "kfarm-worker-XXXXXX").string();
        std::string work_dir;
        {
            std::vector<char> buf(tmpl.begin(), tmpl.end());
            buf.push_back('\0');
            if (!mkdtemp(buf.data()))
                throw Error(Errc::io, "cannot create worker directory");
            work_dir.assign(buf.data());
        }
        Rng rng = seed ? Rng(*seed) : Rng::from_entropy();
        WorkerSession session(rng, work_dir);
        session.serve(std::cin, std::cout);
        std::error_code ec;
        fs::remove_all(work_dir, ec);
        return KF_OK;
    });
}

// ------------------------------------------------------------------- pipe

kf_status kf_pipe_run(int64_t ns, const char* const* exec_argv, size_t argc,
                      double timeout_sec, char** out_value) {
    if (!out_value)
        return usage_error("kf_pipe_run: out_value is null");
    return guarded([&]() -> kf_status {
        ExecSpec spec;
        if (exec_argv && argc > 0) {
            spec.path = exec_argv[0];
            spec.name = spec.path;
            for (size_t i = 1; i < argc; ++i)
                spec.args.emplace_back(exec_argv[i]);
        } else {
            spec.path = self_exe_path();
            spec.name = "pipe worker";
            spec.args = {"pipe", "worker"};
        }
        DirStack dirs;
        double timeout = timeout_sec > 0 ? timeout_sec : 60.0;
        Spectrum s = bridge_pipeline(dirs, ns, spec, timeout);
        *out_value = dup_string(print_value(spectrum_to_value(s)));
        return *out_value ? KF_OK : KF_ERR_STATE;
    });
}

kf_status kf_pipe_worker_stdio(void) {
    return guarded([&]() -> kf_status {
        return bridge_worker_stdio() == 0 ? KF_OK : KF_ERR_BAD_VALUE;
    });
}

// ------------------------------------------------------------------ batch

kf_status kf_batch_submit(const char* script_path, const char* output_path,
                          const uint64_t* seed, long* out_pid) {
    if (!script_path || !output_path)
        return usage_error("kf_batch_submit: bad arguments");
    return guarded([&]() -> kf_status {
        std::optional<std::uint64_t> s;
        if (seed)
            s = *seed;
        JobRecord record = submit_detached(script_path, output_path, s);
        if (out_pid)
            *out_pid = static_cast<long>(record.pid);
        return KF_OK;
    });
}

kf_status kf_batch_status(const char* output_path, char** out_state,
                          double* out_elapsed) {
    if (!output_path || !out_state)
        return usage_error("kf_batch_status: bad arguments");
    return guarded([&]() -> kf_status {
        JobRecord record = job_from_output(output_path);
        *out_state = dup_string(job_state_name(record.state));
        if (out_elapsed)
            *out_elapsed = record.elapsed;
        return *out_state ? KF_OK : KF_ERR_STATE;
    });
}

} // extern "C"
