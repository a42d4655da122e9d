#pragma once

// Denotation executor: an external program that reads logical forms, one per
// line, on stdin and writes one canonical answer per line on stdout. Each
// form is run in its own process so a crash or timeout costs one item only.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "zshot/experiments/metrics.hpp"

namespace zshot::experiments {

inline constexpr const char* kExecutorEnv = "ZSHOT_EXECUTOR";

struct ExecResult {
  std::optional<std::string> answer;  // empty on failure
  std::string error;
};

class Executor {
 public:
  explicit Executor(std::string path, std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : path_(std::move(path)), timeout_(timeout) {}

  /// From ZSHOT_EXECUTOR, if set and non-empty.
  static std::optional<Executor> from_env() {
    const char* p = std::getenv(kExecutorEnv);
    if (p == nullptr || *p == '\0') return std::nullopt;
    return Executor(p);
  }

  const std::string& path() const { return path_; }

  ExecResult run(const Tokens& form) const {
    std::string line;
    for (const auto& t : data::strip_eos(form)) {
      if (!line.empty()) line += ' ';
      line += t;
    }
    return run_line(line + '\n');
  }

 private:
  ExecResult run_line(const std::string& input) const {
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0) return {std::nullopt, "pipe failed"};
    if (pipe(out_pipe) != 0) {
      close(in_pipe[0]);
      close(in_pipe[1]);
      return {std::nullopt, "pipe failed"};
    }
    const pid_t pid = fork();
    if (pid < 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
      return {std::nullopt, "fork failed"};
    }
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
      execl(path_.c_str(), path_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    // Forms are short; a pipe buffer always holds one. A child that exits
    // without reading must not take this process down with SIGPIPE.
    struct sigaction ignore {}, saved {};
    ignore.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &ignore, &saved);
    const auto ignored = write(in_pipe[1], input.data(), input.size());
    (void)ignored;
    close(in_pipe[1]);
    sigaction(SIGPIPE, &saved, nullptr);

    std::string output;
    bool timed_out = false;
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    char buf[4096];
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        break;
      }
      pollfd pfd{out_pipe[0], POLLIN, 0};
      const int r = poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r == 0) {
        timed_out = true;
        break;
      }
      const ssize_t n = read(out_pipe[0], buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      output.append(buf, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);
    int status = 0;
    while (!timed_out) {
      const pid_t w = waitpid(pid, &status, WNOHANG);
      if (w == pid || (w < 0 && errno != EINTR)) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        timed_out = true;
        break;
      }
      usleep(1000);
    }
    if (timed_out) {
      kill(pid, SIGKILL);
      while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
    }
    if (timed_out) return {std::nullopt, "timeout"};
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      return {std::nullopt, "exit status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1)};
    }
    if (output.empty()) return {std::nullopt, "no output"};
    return {output.substr(0, output.find('\n')), {}};
  }

  std::string path_;
  std::chrono::milliseconds timeout_;
};

struct DenotationResult {
  double accuracy = 0.0;
  std::vector<std::string> failures;  // "item <i>: <reason>"
};

/// Fraction of pairs whose executed answers are equal. An item whose
/// prediction or gold fails to execute counts as incorrect.
inline DenotationResult den_accuracy(const std::vector<Tokens>& pred,
                                     const std::vector<Tokens>& gold, const Executor& exec) {
  detail::require_pairs(pred, gold, "den_accuracy");
  DenotationResult r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto a = exec.run(pred[i]);
    const auto b = exec.run(gold[i]);
    if (!a.answer || !b.answer) {
      r.failures.push_back("item " + std::to_string(i) + ": " + (a.answer ? b.error : a.error));
      continue;
    }
    hits += *a.answer == *b.answer;
  }
  r.accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  return r;
}

}  // namespace zshot::experiments
