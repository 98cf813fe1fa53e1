#include "hpprop/external.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>

#include "json.hpp"

extern char** environ;

namespace hpprop {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

SplitPaths split_paths_for_fold(const std::filesystem::path& data_dir, int fold) {
  const auto dir = data_dir / ("fold" + std::to_string(fold));
  return {dir / "train.jsonl", dir / "valid.jsonl", dir / "test.jsonl"};
}

std::string encode_train_request(const Hyperparams& hp, const SplitPaths& paths) {
  const json j = {{"cmd", "train"},
                  {"train", paths.train.string()},
                  {"valid", paths.valid.string()},
                  {"test", paths.test.string()},
                  {"lr", hp.lr},
                  {"batch_size", hp.batch_size},
                  {"epochs", hp.epochs},
                  {"seed", hp.seed},
                  {"max_tokens", hp.budget.max_tokens},
                  {"strategy", to_string(hp.strategy)}};
  return j.dump();
}

std::string encode_ping_request(int batch_size) {
  return json{{"cmd", "ping"}, {"batch_size", batch_size}}.dump();
}

bool ReplyStream::feed(std::string_view line) {
  auto violation = [&](const std::string& what) {
    return TrainerError(TrainerError::Kind::Protocol, what + ": " + std::string(line));
  };
  if (done_) throw violation("reply after done");
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw violation("malformed reply line");
  }
  if (!j.is_object()) throw violation("reply is not an object");
  if (j.contains("error")) {
    const auto message = j["error"].is_string() ? j["error"].get<std::string>() : j["error"].dump();
    if (message.starts_with("fixture miss")) {
      auto rest = std::string_view(message).substr(12);
      if (rest.starts_with(":")) rest.remove_prefix(1);
      while (rest.starts_with(" ")) rest.remove_prefix(1);
      throw TrainerError(TrainerError::Kind::FixtureMiss,
                         rest.empty() ? std::string("reported by trainer") : std::string(rest));
    }
    throw TrainerError(TrainerError::Kind::Remote, message);
  }
  if (j.contains("done")) {
    if (j["done"] != true) throw violation("done must be true");
    if (static_cast<int>(results_.size()) != expected_epochs_) {
      throw violation("done after " + std::to_string(results_.size()) + " of " +
                      std::to_string(expected_epochs_) + " epochs");
    }
    done_ = true;
    return true;
  }
  if (!j.contains("epoch") || !j["epoch"].is_number_integer() || !j.contains("f1_test") ||
      !j["f1_test"].is_number() || !j.contains("valid_loss") || !j["valid_loss"].is_number()) {
    throw violation("unrecognised reply");
  }
  EpochResult r{j["epoch"].get<int>(), j["f1_test"].get<double>(), j["valid_loss"].get<double>()};
  if (r.epoch != static_cast<int>(results_.size()) + 1 || r.epoch > expected_epochs_) {
    throw violation("unexpected epoch number");
  }
  if (!(r.f1_test >= 0.0 && r.f1_test <= 1.0)) throw violation("f1_test outside [0, 1]");
  if (!(r.valid_loss >= 0.0)) throw violation("negative valid_loss");
  results_.push_back(r);
  return false;
}

namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

// Child running `/bin/sh -c command` in its own process group with piped
// stdin and stdout. The destructor kills and reaps it if still running.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    ignore_sigpipe();
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw spawn_error("pipe");
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw spawn_error("pipe");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);
    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, &attr, const_cast<char**>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    stdin_ = in_pipe[1];
    stdout_ = out_pipe[0];
    if (rc != 0) {
      pid_ = -1;
      close_fds();
      throw TrainerError(TrainerError::Kind::Exit, std::string("spawn failed: ") + std::strerror(rc));
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    close_fds();
    if (pid_ > 0) {
      ::kill(-pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  void send_and_close(const std::string& line) {
    std::string payload = line + "\n";
    std::size_t off = 0;
    while (off < payload.size()) {
      const ssize_t n = ::write(stdin_, payload.data() + off, payload.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        break;  // child closed its input; the reply stream reports the outcome
      }
      off += static_cast<std::size_t>(n);
    }
    ::close(stdin_);
    stdin_ = -1;
  }

  // Next line from stdout; nullopt at EOF. Throws Timeout past the deadline.
  std::optional<std::string> read_line(Clock::time_point deadline) {
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (eof_) {
        if (buffer_.empty()) return std::nullopt;
        std::string line;
        line.swap(buffer_);
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (remaining <= 0) throw TrainerError(TrainerError::Kind::Timeout, "trial exceeded its time limit");
      pollfd pfd{stdout_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
      if (rc < 0 && errno != EINTR) throw spawn_error("poll");
      if (rc <= 0) continue;
      char chunk[4096];
      const ssize_t n = ::read(stdout_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw spawn_error("read");
      }
      if (n == 0) {
        eof_ = true;
      } else {
        buffer_.append(chunk, static_cast<std::size_t>(n));
      }
    }
  }

  // Exit status once the child ends; kills it after the deadline.
  int wait(Clock::time_point deadline) {
    while (true) {
      int status = 0;
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) return WEXITSTATUS(status);
        return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
      }
      if (Clock::now() >= deadline) throw TrainerError(TrainerError::Kind::Timeout, "trainer did not exit");
      ::usleep(2000);
    }
  }

 private:
  static TrainerError spawn_error(const char* what) {
    return TrainerError(TrainerError::Kind::Exit, std::string(what) + ": " + std::strerror(errno));
  }

  void close_fds() {
    if (stdin_ >= 0) ::close(stdin_);
    if (stdout_ >= 0) ::close(stdout_);
    stdin_ = stdout_ = -1;
  }

  pid_t pid_ = -1;
  int stdin_ = -1;
  int stdout_ = -1;
  std::string buffer_;
  bool eof_ = false;
};

}  // namespace

std::vector<EpochResult> run_external(const ExternalEndpoint& endpoint, const Hyperparams& hp,
                                      const SplitPaths& paths) {
  const auto deadline = Clock::now() + endpoint.timeout;
  ChildProcess child(endpoint.command);
  child.send_and_close(encode_train_request(hp, paths));
  ReplyStream stream(hp.epochs);
  while (!stream.done()) {
    const auto line = child.read_line(deadline);
    if (!line) {
      const int code = child.wait(deadline);
      if (code != 0) {
        throw TrainerError(TrainerError::Kind::Exit, "trainer exited with status " + std::to_string(code));
      }
      throw TrainerError(TrainerError::Kind::Protocol, "reply stream ended before done");
    }
    if (line->find_first_not_of(" \t") == std::string::npos) continue;
    stream.feed(*line);
  }
  const int code = child.wait(deadline);
  if (code != 0) {
    throw TrainerError(TrainerError::Kind::Exit, "trainer exited with status " + std::to_string(code));
  }
  return stream.results();
}

bool ping_external(const ExternalEndpoint& endpoint, int batch_size) {
  const auto deadline = Clock::now() + endpoint.timeout;
  ChildProcess child(endpoint.command);
  child.send_and_close(encode_ping_request(batch_size));
  while (const auto line = child.read_line(deadline)) {
    if (line->find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const json j = json::parse(*line);
      return j.is_object() && j.value("ok", false) == true;
    } catch (const json::parse_error&) {
      return false;
    }
  }
  return false;
}

ExternalBackend::ExternalBackend(ExternalEndpoint endpoint, std::filesystem::path data_dir,
                                 std::string variant)
    : endpoint_(std::move(endpoint)), data_dir_(std::move(data_dir)), variant_(std::move(variant)) {}

std::vector<EpochResult> ExternalBackend::run(const Hyperparams& hp, int fold) {
  if (fold < 0) throw TrainerError(TrainerError::Kind::Data, "external trials run on a single fold");
  return run_external(endpoint_, hp, split_paths_for_fold(data_dir_, fold));
}

bool ExternalBackend::ping(int batch_size) {
  try {
    return ping_external(endpoint_, batch_size);
  } catch (const TrainerError&) {
    return false;
  }
}

}  // namespace hpprop
