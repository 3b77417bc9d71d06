#include "proc.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "error.hpp"

namespace kfarm {

namespace {

[[noreturn]] void child_exec(const std::vector<std::string>& argv,
                             const std::string& workdir, int err_fd) {
    if (!workdir.empty() && chdir(workdir.c_str()) != 0) {
        int e = errno;
        (void)!write(err_fd, &e, sizeof e);
        _exit(127);
    }
    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    int e = errno;
    (void)!write(err_fd, &e, sizeof e);
    _exit(127);
}

// Returns 0 if exec succeeded (pipe closed empty), else the child's errno.
int read_exec_errno(int err_fd) {
    int e = 0;
    ssize_t n;
    do {
        n = read(err_fd, &e, sizeof e);
    } while (n < 0 && errno == EINTR);
    return n == static_cast<ssize_t>(sizeof e) ? e : 0;
}

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

} // namespace

ChildProcess spawn_piped(const std::vector<std::string>& argv,
                         const std::string& workdir) {
    if (argv.empty())
        throw Error(Errc::spawn, "empty command line");
    int to_child[2], from_child[2], exec_err[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0 || pipe(exec_err) != 0)
        throw Error(Errc::spawn, std::string("pipe: ") + std::strerror(errno));
    fcntl(exec_err[1], F_SETFD, FD_CLOEXEC);

    pid_t pid = fork();
    if (pid < 0)
        throw Error(Errc::spawn, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        close(exec_err[0]);
        child_exec(argv, workdir, exec_err[1]);
    }
    close(to_child[0]);
    close(from_child[1]);
    close(exec_err[1]);

    int e = read_exec_errno(exec_err[0]);
    close(exec_err[0]);
    if (e != 0) {
        close(to_child[1]);
        close(from_child[0]);
        waitpid(pid, nullptr, 0);
        throw Error(Errc::spawn,
                    argv[0] + ": " + std::strerror(e));
    }
    return ChildProcess{pid, to_child[1], from_child[0]};
}

std::optional<std::string> LineReader::read_line(double timeout_sec) {
    double deadline = timeout_sec > 0 ? now_seconds() + timeout_sec : 0.0;
    for (;;) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (eof_) {
            if (buffer_.empty())
                return std::nullopt;
            std::string line = std::move(buffer_);
            buffer_.clear();
            return line;
        }
        if (deadline > 0) {
            double remain = deadline - now_seconds();
            if (remain <= 0)
                throw Error(Errc::timeout, "timed out waiting for a line");
            struct pollfd pfd{fd_, POLLIN, 0};
            int rc = poll(&pfd, 1, static_cast<int>(remain * 1000) + 1);
            if (rc < 0) {
                if (errno == EINTR)
                    continue;
                throw Error(Errc::io, std::string("poll: ") + std::strerror(errno));
            }
            if (rc == 0)
                throw Error(Errc::timeout, "timed out waiting for a line");
        }
        char chunk[4096];
        ssize_t n = read(fd_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw Error(Errc::io, std::string("read: ") + std::strerror(errno));
        }
        if (n == 0)
            eof_ = true;
        else
            buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

CaptureResult run_capture(const std::vector<std::string>& argv,
                          const std::string& stdin_file,
                          const std::string& workdir, double timeout_sec) {
    int in_fd = open(stdin_file.c_str(), O_RDONLY);
    if (in_fd < 0)
        throw Error(Errc::io, stdin_file + ": " + std::strerror(errno));

    int from_child[2], exec_err[2];
    if (pipe(from_child) != 0 || pipe(exec_err) != 0) {
        close(in_fd);
        throw Error(Errc::spawn, std::string("pipe: ") + std::strerror(errno));
    }
    fcntl(exec_err[1], F_SETFD, FD_CLOEXEC);

    pid_t pid = fork();
    if (pid < 0) {
        close(in_fd);
        throw Error(Errc::spawn, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        dup2(in_fd, STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(in_fd);
        close(from_child[0]);
        close(from_child[1]);
        close(exec_err[0]);
        child_exec(argv, workdir, exec_err[1]);
    }
    close(in_fd);
    close(from_child[1]);
    close(exec_err[1]);

    int e = read_exec_errno(exec_err[0]);
    close(exec_err[0]);
    if (e != 0) {
        close(from_child[0]);
        waitpid(pid, nullptr, 0);
        throw Error(Errc::spawn, argv[0] + ": " + std::strerror(e));
    }

    CaptureResult result;
    double deadline = timeout_sec > 0 ? now_seconds() + timeout_sec : 0.0;
    char chunk[8192];
    for (;;) {
        if (deadline > 0) {
            double remain = deadline - now_seconds();
            if (remain <= 0) {
                close(from_child[0]);
                kill_hard(pid);
                throw Error(Errc::timeout,
                            argv[0] + ": no result within " +
                                std::to_string(timeout_sec) + " s");
            }
            struct pollfd pfd{from_child[0], POLLIN, 0};
            int rc = poll(&pfd, 1, static_cast<int>(remain * 1000) + 1);
            if (rc < 0) {
                if (errno == EINTR)
                    continue;
                close(from_child[0]);
                kill_hard(pid);
                throw Error(Errc::io, std::string("poll: ") + std::strerror(errno));
            }
            if (rc == 0)
                continue; // loop re-checks the deadline
        }
        ssize_t n = read(from_child[0], chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            close(from_child[0]);
            kill_hard(pid);
            throw Error(Errc::io, std::string("read: ") + std::strerror(errno));
        }
        if (n == 0)
            break;
        result.output.append(chunk, static_cast<std::size_t>(n));
    }
    close(from_child[0]);

    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR)
        continue;
    result.exit_status = status;
    return result;
}

bool pid_alive(pid_t pid) {
    return kill(pid, 0) == 0 || errno == EPERM;
}

bool wait_exit(pid_t pid, double grace_sec) {
    double deadline = now_seconds() + grace_sec;
    for (;;) {
        int status = 0;
        pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid)
            return true;
        if (r < 0 && errno != EINTR)
            return true; // already reaped elsewhere or not our child
        if (now_seconds() >= deadline)
            return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

void kill_hard(pid_t pid) {
    kill(pid, SIGKILL);
    while (waitpid(pid, nullptr, 0) < 0 && errno == EINTR)
        continue;
}

std::string self_exe_path() {
    char buf[4096];
    ssize_t n = readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n <= 0)
        throw Error(Errc::io, "cannot resolve /proc/self/exe");
    return std::string(buf, static_cast<std::size_t>(n));
}

void write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        ssize_t n = write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw Error(Errc::io, std::string("write: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

void ignore_sigpipe() {
    struct sigaction sa{};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
}

} // namespace kfarm
