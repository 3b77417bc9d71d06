#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "protocol.hpp"
#include "value.hpp"

namespace kfarm {

// One script line. The raw text is kept so echo mode can reproduce input
// lines byte for byte.
struct Statement {
    enum class Kind { blank, comment, echo_on, assign, bare, export_eps };

    Kind kind = Kind::blank;
    int line_no = 0;
    std::string raw;

    // assign / bare
    std::string target;
    std::optional<TaskExpr> task;
    std::optional<Value> literal;

    // export_eps
    std::string path;
    std::string figure;
};

struct Script {
    std::vector<Statement> statements;
};

// statement := comment | `echo stdout` | ident `=` (value|taskexpr)
//            | taskexpr | export_eps["path", ident]
// Unknown forms are rejected here, with the line number.
Script parse_script(const std::string& text);
Script parse_script_file(const std::string& path);

// Executes statements in order against a fresh environment. After
// `echo stdout` every input line (that one included) is copied verbatim to
// the sink before it runs. Assignments are silent, bare expressions print
// `=> <value>`, errors print `!! <line>: <code> <message>` and stop the
// run. A successful run ends with `## elapsed <seconds>` (3 decimals).
// Returns 0 on success, 1 on a statement error.
int run_script(const Script& script, std::ostream& sink, Env& env, Rng& rng);

struct JobRecord {
    enum class State { running, done, failed };

    int id = 0;
    std::string script_path;
    std::string output_path;
    pid_t pid = -1;
    State state = State::running;
    std::chrono::system_clock::time_point start;
    double elapsed = 0.0; // valid once done
};

const char* job_state_name(JobRecord::State s);

// Runs the script in a session-detached process that survives the caller's
// exit. stdout/stderr of the job are bound to output_path and
// `<output>.pid` holds the job's pid while it runs. The script must parse
// before anything is spawned.
JobRecord submit_detached(const std::string& script_path,
                          const std::string& output_path,
                          std::optional<std::uint64_t> seed = std::nullopt);

// Derives the current state from the pid and the output file:
// footer => done, `!!` line or dead pid or missing output => failed,
// otherwise running. Updates state/elapsed in place and returns the state.
JobRecord::State job_status(JobRecord& record);

// Reconstruct enough of a record from the output path alone to answer a
// status query (the CLI's `batch status` entry point).
JobRecord job_from_output(const std::string& output_path);

} // namespace kfarm
