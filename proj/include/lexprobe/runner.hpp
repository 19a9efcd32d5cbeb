#pragma once

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "lexprobe/config.hpp"
#include "lexprobe/error.hpp"

namespace lexprobe {

/// Single-quotes `arg` for /bin/sh.
inline std::string shell_quote(const std::string& arg) {
    std::string out = "'";
    for (char c : arg) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
};

/// Runs `command` through /bin/sh with stdout and stderr appended to `log`.
/// The whole process group is killed when `timeout` elapses.
inline ProcessResult run_process(const std::string& command, std::chrono::milliseconds timeout,
                                 const std::filesystem::path& log) {
    if (!log.parent_path().empty()) std::filesystem::create_directories(log.parent_path());
    const pid_t pid = ::fork();
    if (pid < 0) throw RunnerError("fork failed");
    if (pid == 0) {
        ::setpgid(0, 0);
        const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd >= 0) {
            ::dup2(fd, STDOUT_FILENO);
            ::dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    ProcessResult result;
    int status = 0;
    for (;;) {
        const pid_t done = ::waitpid(pid, &status, WNOHANG);
        if (done == pid) break;
        if (done < 0) throw RunnerError("waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            result.timed_out = true;
            return result;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    return result;
}

/// Hyperparameters handed to the runner for every invocation.
inline nlohmann::json runner_config_json(const PipelineConfig& cfg, std::uint64_t model_seed) {
    return {{"base_model", cfg.runner.base_model},
            {"epochs", 5},
            {"batch_size", 32},
            {"learning_rate", 4e-5},
            {"weight_decay", 0.02},
            {"scheduler", "linear"},
            {"warmup_fraction", 0.1},
            {"class_weight_metaphorical", 3.0},
            {"validation_fraction", 0.1},
            {"seed", model_seed},
            {"mask_placeholder", cfg.mask_token}};
}

struct RunnerCall {
    std::string action;  // finetune | predict | embed
    nlohmann::json config;
    std::filesystem::path config_path;
    std::filesystem::path input;
    std::filesystem::path output;
    std::filesystem::path log;
};

/// Invokes the runner; throws RunnerError on nonzero exit or timeout.
inline void invoke_runner(const RunnerDescriptor& runner, const RunnerCall& call) {
    if (runner.command.empty()) throw RunnerError("no runner_command configured");
    std::filesystem::create_directories(call.config_path.parent_path());
    {
        std::ofstream out(call.config_path);
        out << call.config.dump(2) << '\n';
    }
    if (!call.output.parent_path().empty()) std::filesystem::create_directories(call.output.parent_path());
    const std::string command = runner.command + " " + call.action + " --config " + shell_quote(call.config_path) +
                                " --in " + shell_quote(call.input) + " --out " + shell_quote(call.output);
    const auto res = run_process(command, runner.timeout, call.log);
    if (res.timed_out) {
        throw RunnerError("runner " + call.action + " timed out; log: " + call.log.string());
    }
    if (res.exit_code != 0) {
        throw RunnerError("runner " + call.action + " exited with status " + std::to_string(res.exit_code) +
                          "; log: " + call.log.string());
    }
}

}  // namespace lexprobe
