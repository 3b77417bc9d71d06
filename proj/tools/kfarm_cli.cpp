// kfarm command-line front end. Everything goes through the C API in
// kfarm.h; this file owns only argument handling and printing.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kfarm.h"

namespace {

int fail(kf_status rc) {
    std::fprintf(stderr, "kfarm: error: %s\n", kf_last_error());
    return rc == KF_ERR_USAGE ? 2 : 1;
}

struct FarmGuard {
    kf_farm* farm = nullptr;
    ~FarmGuard() {
        if (farm) {
            kf_farm_close(farm);
            kf_farm_free(farm);
        }
    }
};

// specs: comma-separated `local` or `ssh:<host>` entries
int launch_slaves(kf_farm* farm, const std::string& specs) {
    std::size_t start = 0;
    while (start <= specs.size()) {
        std::size_t comma = specs.find(',', start);
        std::string spec = specs.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        start = comma == std::string::npos ? specs.size() + 1 : comma + 1;
        if (spec.empty())
            continue;
        kf_status rc;
        int id = 0;
        if (spec == "local") {
            rc = kf_farm_launch_local(farm, &id);
        } else if (spec.rfind("ssh:", 0) == 0 && spec.size() > 4) {
            rc = kf_farm_launch_ssh(farm, spec.c_str() + 4, &id);
        } else {
            std::fprintf(stderr,
                         "kfarm: error: bad slave spec '%s' "
                         "(expected local or ssh:<host>)\n",
                         spec.c_str());
            return 2;
        }
        if (rc != KF_OK)
            return fail(rc);
    }
    return 0;
}

kf_farm* make_farm(bool has_seed, std::uint64_t seed, double timeout,
                   const std::string& worker_cmd) {
    kf_farm* farm = nullptr;
    std::uint64_t s = seed;
    if (kf_farm_new(&farm, has_seed ? &s : nullptr) != KF_OK)
        return nullptr;
    if (timeout > 0 && kf_farm_set_timeout(farm, timeout) != KF_OK) {
        kf_farm_free(farm);
        return nullptr;
    }
    if (!worker_cmd.empty() &&
        kf_farm_set_remote_cmd(farm, worker_cmd.c_str()) != KF_OK) {
        kf_farm_free(farm);
        return nullptr;
    }
    return farm;
}

// The worker must accept and ignore flags it does not know, so its argv is
// scanned by hand instead of going through the strict parser.
int run_worker(const std::vector<std::string>& args) {
    bool has_seed = false;
    std::uint64_t seed = 0;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        std::string value;
        if (a == "--seed" && i + 1 < args.size())
            value = args[++i];
        else if (a.rfind("--seed=", 0) == 0)
            value = a.substr(7);
        else
            continue;
        try {
            seed = std::stoull(value);
            has_seed = true;
        } catch (...) {
            std::fprintf(stderr, "kfarm: error: bad --seed value '%s'\n",
                         value.c_str());
            return 2;
        }
    }
    kf_status rc = kf_worker_serve_stdio(has_seed ? &seed : nullptr);
    return rc == KF_OK ? 0 : fail(rc);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"kfarm: a master/worker kernel farm with a pipe bridge to "
                 "external programs and a batch job runner"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kf_version()));

    // worker: handled outside CLI11 so unknown flags are tolerated
    if (argc >= 2 && std::strcmp(argv[1], "worker") == 0)
        return run_worker(std::vector<std::string>(argv + 2, argv + argc));

    bool has_seed = false;
    std::uint64_t seed = 0;
    double timeout = 0;
    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
            "--seed",
            [&](const std::uint64_t& v) {
                seed = v;
                has_seed = true;
            },
            "seed for the random generator (default: entropy)");
    };

    app.add_subcommand("worker",
                       "serve the wire protocol on stdio (accepts --seed; "
                       "other flags are ignored)");

    // ---- farm ----
    auto* farm_cmd = app.add_subcommand("farm", "master-side worker farm");
    farm_cmd->require_subcommand(1);
    std::string slaves;
    std::string worker_cmd;
    std::int64_t ns = 2;

    auto* farm_run = farm_cmd->add_subcommand(
        "run", "run the three-matrix scatter/gather pipeline");
    farm_run->add_option("--ns", ns, "matrix order")->required();
    farm_run->add_option("--slaves", slaves,
                         "comma-separated specs: local or ssh:<host>")
        ->required();
    farm_run->add_option("--worker-cmd", worker_cmd,
                         "worker command used on ssh hosts");
    farm_run->add_option("--timeout", timeout, "per-request timeout (s)");
    add_seed(farm_run);

    auto* farm_info = farm_cmd->add_subcommand(
        "info", "launch slaves and print their identity table");
    farm_info->add_option("--slaves", slaves,
                          "comma-separated specs: local or ssh:<host>")
        ->required();
    farm_info->add_option("--worker-cmd", worker_cmd,
                          "worker command used on ssh hosts");
    farm_info->add_option("--timeout", timeout, "per-request timeout (s)");

    // ---- pipe ----
    auto* pipe_cmd =
        app.add_subcommand("pipe", "byte-exact bridge to external programs");
    pipe_cmd->require_subcommand(1);
    std::string exec_path;
    std::vector<std::string> exec_args;

    auto* pipe_run = pipe_cmd->add_subcommand(
        "run", "matrix product through an external program, then eigenvalues");
    pipe_run->add_option("--ns", ns, "matrix order")->required();
    pipe_run->add_option("--exec", exec_path,
                         "external executable (default: self-hosted worker)");
    pipe_run->add_option("args", exec_args, "arguments for the executable");
    pipe_run->add_option("--timeout", timeout, "external program timeout (s)");

    pipe_cmd->add_subcommand(
        "worker", "act as the reference external product program on stdio");

    // ---- batch ----
    auto* batch_cmd =
        app.add_subcommand("batch", "detached background script jobs");
    batch_cmd->require_subcommand(1);
    std::string script_path, output_path;

    auto* batch_submit =
        batch_cmd->add_subcommand("submit", "run a script detached");
    batch_submit->add_option("script", script_path, "script file")->required();
    batch_submit->add_option("-o,--output", output_path, "output file")
        ->required();
    add_seed(batch_submit);

    auto* batch_status =
        batch_cmd->add_subcommand("status", "query a submitted job");
    batch_status->add_option("output", output_path, "output file of the job")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (farm_run->parsed() || farm_info->parsed()) {
        FarmGuard guard;
        guard.farm = make_farm(has_seed, seed, timeout, worker_cmd);
        if (!guard.farm)
            return fail(KF_ERR_STATE);
        if (int rc = launch_slaves(guard.farm, slaves); rc != 0)
            return rc;
        if (farm_run->parsed()) {
            char* out = nullptr;
            kf_status rc = kf_farm_pipeline(guard.farm, ns, &out);
            if (rc != KF_OK)
                return fail(rc);
            std::printf("%s\n", out);
            kf_string_free(out);
        } else {
            char* table = nullptr;
            kf_status rc = kf_farm_info_table(guard.farm, &table);
            if (rc != KF_OK)
                return fail(rc);
            std::fputs(table, stdout);
            kf_string_free(table);
        }
        return 0;
    }

    if (pipe_run->parsed()) {
        std::vector<const char*> exec_argv;
        if (!exec_path.empty()) {
            exec_argv.push_back(exec_path.c_str());
            for (const auto& a : exec_args)
                exec_argv.push_back(a.c_str());
        }
        char* out = nullptr;
        kf_status rc = kf_pipe_run(ns, exec_argv.data(), exec_argv.size(),
                                   timeout, &out);
        if (rc != KF_OK)
            return fail(rc);
        std::printf("%s\n", out);
        kf_string_free(out);
        return 0;
    }

    if (pipe_cmd->parsed()) { // pipe worker
        kf_status rc = kf_pipe_worker_stdio();
        return rc == KF_OK ? 0 : fail(rc);
    }

    if (batch_submit->parsed()) {
        long pid = 0;
        std::uint64_t s = seed;
        kf_status rc = kf_batch_submit(script_path.c_str(), output_path.c_str(),
                                       has_seed ? &s : nullptr, &pid);
        if (rc != KF_OK)
            return fail(rc);
        std::printf("submitted pid %ld output %s\n", pid, output_path.c_str());
        return 0;
    }

    if (batch_status->parsed()) {
        char* state = nullptr;
        double elapsed = 0;
        kf_status rc = kf_batch_status(output_path.c_str(), &state, &elapsed);
        if (rc != KF_OK)
            return fail(rc);
        if (std::strcmp(state, "done") == 0)
            std::printf("%s %.3f\n", state, elapsed);
        else
            std::printf("%s\n", state);
        kf_string_free(state);
        return 0;
    }

    return 2;
}
