// Copyright 2026 The peftsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <mutex>

#include "peftsearch/errors.hpp"
#include "peftsearch/io.hpp"
#include "peftsearch/objectives.hpp"

namespace peftsearch {

std::string encode_request(const WorkerRequest& request) {
  std::string line = "{\"id\":";
  line += Json(request.id).dump();
  line += ",\"config\":" + to_text(request.config);
  line += ",\"fidelity\":" + format_double(request.fidelity);
  line += ",\"seed\":" + std::to_string(request.seed);
  line += "}\n";
  return line;
}

WorkerResponse decode_response(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw EvaluationError(std::string("malformed worker response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.at("id").is_string()) {
    throw EvaluationError("worker response lacks a string id");
  }
  WorkerResponse r;
  r.id = j.at("id").get<std::string>();
  auto number = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_number()) {
      throw EvaluationError(std::string("worker response field '") + key + "' is not a number");
    }
    return j.at(key).get<double>();
  };
  r.score = number("score");
  r.cost = number("cost");
  if (j.contains("error") && !j.at("error").is_null()) {
    r.error = j.at("error").is_string() ? j.at("error").get<std::string>() : j.at("error").dump();
  }
  if (r.score.has_value() == r.error.has_value()) {
    throw EvaluationError("worker response must carry exactly one of score or error");
  }
  return r;
}

namespace {

class WorkerProcess {
 public:
  explicit WorkerProcess(const std::string& command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      throw EvaluationError(std::string("socketpair: ") + std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw EvaluationError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::setpgid(0, 0);
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid_, pid_);
    ::close(fds[1]);
    fd_ = fds[0];
  }

  ~WorkerProcess() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
      ::close(fd_);
    }
    if (pid_ > 0) {
      // Give a well-behaved worker a moment to exit on EOF.
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) return;
        ::usleep(2000);
      }
      // The command may have forked; take down its whole process group.
      ::kill(-pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
  }

  WorkerProcess(const WorkerProcess&) = delete;
  WorkerProcess& operator=(const WorkerProcess&) = delete;

  void send(const std::string& line) {
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EvaluationError(std::string("writing to worker: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw EvaluationError("worker timed out");
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw EvaluationError(std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EvaluationError(std::string("reading from worker: ") + std::strerror(errno));
      }
      if (n == 0) throw EvaluationError("worker exited before responding");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace

struct WorkerBackend::Pool {
  WorkerOptions options;
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::unique_ptr<WorkerProcess>> idle;
  std::size_t alive = 0;
  std::atomic<std::uint64_t> next_id{0};

  std::unique_ptr<WorkerProcess> acquire() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return !idle.empty() || alive < options.pool_size; });
    if (!idle.empty()) {
      auto w = std::move(idle.back());
      idle.pop_back();
      return w;
    }
    ++alive;
    lock.unlock();
    try {
      return std::make_unique<WorkerProcess>(options.command);
    } catch (...) {
      release(nullptr);
      throw;
    }
  }

  // A null process means the slot died and must be respawned on demand.
  void release(std::unique_ptr<WorkerProcess> w) {
    {
      std::lock_guard lock(mu);
      if (w) {
        idle.push_back(std::move(w));
      } else {
        --alive;
      }
    }
    cv.notify_one();
  }
};

WorkerBackend::WorkerBackend(WorkerOptions options) : pool_(std::make_unique<Pool>()) {
  if (options.command.empty()) throw std::invalid_argument("worker command is empty");
  if (options.pool_size == 0) options.pool_size = 1;
  pool_->options = std::move(options);
}

WorkerBackend::~WorkerBackend() = default;

BackendResult WorkerBackend::score(const Configuration& config, double fidelity,
                                   std::uint64_t seed) {
  WorkerRequest req{std::to_string(pool_->next_id++), config, fidelity, seed};
  auto worker = pool_->acquire();
  WorkerResponse resp;
  try {
    worker->send(encode_request(req));
    resp = decode_response(worker->receive(pool_->options.timeout));
    if (resp.id != req.id) {
      throw EvaluationError("worker answered id '" + resp.id + "' to request '" + req.id + "'");
    }
  } catch (...) {
    // The stream may be out of sync now; drop this process.
    worker.reset();
    pool_->release(nullptr);
    throw;
  }
  pool_->release(std::move(worker));
  if (resp.error) throw EvaluationError("worker error: " + *resp.error);
  return BackendResult{*resp.score, resp.cost};
}

}  // namespace peftsearch
