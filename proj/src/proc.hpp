#pragma once

#include <sys/types.h>

#include <optional>
#include <string>
#include <vector>

namespace kfarm {

// Child process with pipes bound to its stdin/stdout (stderr inherited).
// exec failures in the child are reported synchronously through a
// close-on-exec pipe, so a missing executable throws here, not later.
struct ChildProcess {
    pid_t pid = -1;
    int stdin_fd = -1;  // write end
    int stdout_fd = -1; // read end
};

ChildProcess spawn_piped(const std::vector<std::string>& argv,
                         const std::string& workdir = {});

// Incremental line reader over a file descriptor. Lines are LF-terminated;
// a deadline of <= 0 means block indefinitely.
class LineReader {
public:
    explicit LineReader(int fd) : fd_(fd) {}

    // nullopt on end of stream. Throws Errc::timeout when the deadline
    // passes with an incomplete line.
    std::optional<std::string> read_line(double timeout_sec = 0.0);

private:
    int fd_;
    std::string buffer_;
    bool eof_ = false;
};

struct CaptureResult {
    int exit_status = 0; // raw waitpid status, use WIFEXITED/WEXITSTATUS
    std::string output;
};

// Run argv with stdin redirected from a file, capturing stdout to
// completion. Kills the child and throws on timeout.
CaptureResult run_capture(const std::vector<std::string>& argv,
                          const std::string& stdin_file,
                          const std::string& workdir, double timeout_sec);

bool pid_alive(pid_t pid);

// waitpid poll loop; true once the child has been reaped.
bool wait_exit(pid_t pid, double grace_sec);

// SIGKILL followed by a reap.
void kill_hard(pid_t pid);

std::string self_exe_path();

void write_all(int fd, const std::string& data);

void ignore_sigpipe();

} // namespace kfarm
