#include "crux/process.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include "crux/error.hpp"

extern char** environ;

namespace crux::proc {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::string> build_env(const std::map<std::string, std::string>& overrides) {
    std::map<std::string, std::string> merged;
    for (char** e = environ; e && *e; ++e) {
        std::string kv(*e);
        auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        merged[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    for (const auto& [k, v] : overrides) merged[k] = v;
    std::vector<std::string> out;
    out.reserve(merged.size());
    for (const auto& [k, v] : merged) out.push_back(k + "=" + v);
    return out;
}

void append_capped(std::string& dst, const char* buf, std::size_t n, std::size_t cap) {
    if (dst.size() >= cap) return;
    dst.append(buf, std::min(n, cap - dst.size()));
}

} // namespace

ProcessResult run_shell(const std::string& shell_cmd, const std::string& cwd,
                        const std::map<std::string, std::string>& env, long timeout_ms, std::size_t max_capture) {
    // Everything the child touches is prepared before fork.
    auto env_strings = build_env(env);
    std::vector<char*> envp;
    for (auto& s : env_strings) envp.push_back(s.data());
    envp.push_back(nullptr);
    std::string sh = "/bin/sh", dash_c = "-c", cmd = shell_cmd;
    char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};

    int out_pipe[2], err_pipe[2];
    if (pipe2(out_pipe, O_CLOEXEC) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0)
        throw Error(ErrorCode::IoError, std::string("pipe: ") + std::strerror(errno));

    const auto start = Clock::now();
    pid_t pid = fork();
    if (pid < 0) throw Error(ErrorCode::IoError, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        setpgid(0, 0);
        if (!cwd.empty() && chdir(cwd.c_str()) != 0) _exit(126);
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, 0);
        dup2(out_pipe[1], 1);
        dup2(err_pipe[1], 2);
        execve(argv[0], argv, envp.data());
        _exit(127);
    }
    setpgid(pid, pid); // also done in the child; whichever runs first wins
    close(out_pipe[1]);
    close(err_pipe[1]);

    ProcessResult res;
    const auto deadline = start + std::chrono::milliseconds(timeout_ms);
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    int open_fds = 2;
    char buf[65536];
    while (open_fds > 0) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        if (left <= 0) {
            res.timed_out = true;
            break;
        }
        int rc = poll(fds, 2, static_cast<int>(std::min<long long>(left, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                append_capped(i == 0 ? res.out : res.err, buf, static_cast<std::size_t>(n), max_capture);
            } else if (n == 0 || (n < 0 && errno != EINTR && errno != EAGAIN)) {
                close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }
    // Kill the group both on timeout and to reap stragglers holding no pipes.
    kill(-pid, SIGKILL);
    for (auto& f : fds)
        if (f.fd >= 0) close(f.fd);
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    res.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
    if (res.timed_out) return res;
    if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) res.term_signal = WTERMSIG(status);
    return res;
}

bool resolvable(const std::string& program, const std::string& path_override) {
    if (program.empty()) return false;
    auto executable = [](const std::string& p) {
        struct stat st{};
        return stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && access(p.c_str(), X_OK) == 0;
    };
    if (program.find('/') != std::string::npos) return executable(program);
    std::string path = path_override;
    if (path.empty()) {
        const char* p = std::getenv("PATH");
        path = p ? p : "/usr/bin:/bin";
    }
    std::size_t b = 0;
    while (b <= path.size()) {
        auto e = path.find(':', b);
        if (e == std::string::npos) e = path.size();
        std::string dir = path.substr(b, e - b);
        if (dir.empty()) dir = ".";
        if (executable(dir + "/" + program)) return true;
        b = e + 1;
    }
    return false;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    out += "'";
    return out;
}

} // namespace crux::proc
