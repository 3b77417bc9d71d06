#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "value.hpp"

namespace kfarm {

// One protocol frame. Text framing, LF line endings:
//   >REQ <id> <CMD> [arg]   |   >OK <id>   |   >ERR <id> <code>
//   |<payload line>                (zero or more)
//   >END
enum class MsgKind { request, ok, error };

enum class Command { info, setg, eval, exp, read, close };

const char* command_name(Command c);
std::optional<Command> command_from(std::string_view name);

struct Message {
    MsgKind kind = MsgKind::request;
    std::uint64_t id = 0;
    Command command = Command::info; // requests only
    std::string arg;                 // optional header argument
    std::string code;                // errors only
    std::vector<std::string> payload;

    bool operator==(const Message&) const = default;

    static Message request(std::uint64_t id, Command cmd, std::string arg = {},
                           std::vector<std::string> payload = {});
    static Message ok(std::uint64_t id, std::vector<std::string> payload = {});
    static Message error(std::uint64_t id, std::string code);
};

std::string encode(const Message& msg);

// Inverse of encode over a complete frame. Throws Errc::protocol on an
// unknown header, a bad id, or a missing terminator.
Message decode(const std::vector<std::string>& lines);

// Stable worker error codes.
inline constexpr const char* kErrBadFrame = "BADFRAME";
inline constexpr const char* kErrBadTask = "BADTASK";
inline constexpr const char* kErrUnbound = "UNBOUND";
inline constexpr const char* kErrIo = "IOERR";
inline constexpr const char* kErrBadValue = "BADVALUE";

const char* protocol_code(Errc c);

// A call in the fixed task vocabulary: a task name with flat arguments,
// each either a value literal or a reference to a global binding. No
// nesting; composition happens through globals.
struct TaskExpr {
    using Arg = std::variant<Value, std::string>; // string = identifier

    std::string name;
    std::vector<Arg> args;
};

TaskExpr parse_task(std::string_view text);
std::string print_task(const TaskExpr& expr);

// Registered vocabulary: tridiag, fill, matmul, dot3, eigen, random_table,
// chop, plot. Locals of a task never touch the environment.
Value eval_task(const TaskExpr& expr, const Env& env, Rng& rng);

bool is_known_task(const std::string& name);

// {machine_name, system_id, process_id, version} for this process.
Value worker_info_value();

// Serve the protocol until CLOSE or end of input. Relative EXPORT/READ
// paths resolve against work_dir. Malformed frames produce >ERR BADFRAME
// and the loop continues.
class WorkerSession {
public:
    explicit WorkerSession(Rng rng, std::string work_dir = ".")
        : rng_(std::move(rng)), work_dir_(std::move(work_dir)) {}

    Env& env() { return env_; }

    void serve(std::istream& in, std::ostream& out);

    // Handle one already-decoded request; exposed for direct testing.
    Message handle(const Message& request);

private:
    Env env_;
    Rng rng_;
    std::string work_dir_;
};

} // namespace kfarm
