#pragma once
// Subprocess execution with captured output and a hard deadline.

#include <map>
#include <string>

namespace crux::proc {

struct ProcessResult {
    int exit_code = -1;   // valid when term_signal == 0 and !timed_out
    int term_signal = 0;  // nonzero when killed by a signal other than our timeout kill
    bool timed_out = false;
    std::string out;
    std::string err;
    long wall_ms = 0;
};

/// Runs `/bin/sh -c shell_cmd` in `cwd` in its own process group. On timeout
/// the whole group is killed. `env` entries override the inherited environment.
/// Captured streams are truncated at `max_capture` bytes each.
ProcessResult run_shell(const std::string& shell_cmd, const std::string& cwd,
                        const std::map<std::string, std::string>& env, long timeout_ms,
                        std::size_t max_capture = 8u << 20);

/// True when `program` is an executable path or can be found on PATH
/// (`path_override` replaces $PATH when nonempty).
bool resolvable(const std::string& program, const std::string& path_override = "");

/// POSIX single-quote escaping for shell command templates.
std::string shell_quote(const std::string& s);

} // namespace crux::proc
