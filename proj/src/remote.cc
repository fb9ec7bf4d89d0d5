#include "lerg/remote.h"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <future>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace lerg {
namespace protocol {
namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void protocol_error(const std::string& message) {
  throw Error(ErrorCode::kModelProtocolError, message);
}

nlohmann::json parse_object(std::string_view line, const char* what) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("malformed ") + what + ": " + e.what());
  }
  if (!j.is_object()) protocol_error(std::string(what) + " is not an object");
  return j;
}

}  // namespace

std::string encode_handshake(const Handshake& handshake) {
  ordered_json j;
  j["protocol"] = handshake.protocol;
  j["version"] = handshake.version;
  j["normalized"] = handshake.normalized;
  j["max_batch"] = handshake.max_batch;
  return j.dump();
}

Handshake parse_handshake(std::string_view line) {
  const auto j = parse_object(line, "handshake");
  Handshake h;
  try {
    h.protocol = j.at("protocol").get<std::string>();
    h.version = j.at("version").get<int>();
    h.normalized = j.at("normalized").get<bool>();
    const auto max_batch = j.at("max_batch").get<long long>();
    if (max_batch < 1) protocol_error("handshake max_batch must be >= 1");
    h.max_batch = static_cast<std::size_t>(max_batch);
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("handshake field error: ") + e.what());
  }
  if (h.protocol != kProtocolName || h.version != kProtocolVersion) {
    protocol_error("unsupported protocol '" + h.protocol + "' version " +
                   std::to_string(h.version));
  }
  return h;
}

std::string encode_request(std::string_view id,
                           std::span<const std::vector<std::string>> contexts,
                           std::span<const std::string> response) {
  ordered_json j;
  j["id"] = id;
  j["contexts"] = ordered_json::array();
  for (const auto& ctx : contexts) j["contexts"].push_back(ctx);
  j["response"] = std::vector<std::string>(response.begin(), response.end());
  return j.dump();
}

Request parse_request(std::string_view line) {
  const auto j = parse_object(line, "request");
  Request r;
  try {
    r.id = j.at("id").get<std::string>();
    r.contexts = j.at("contexts").get<std::vector<std::vector<std::string>>>();
    r.response = j.at("response").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("request field error: ") + e.what());
  }
  return r;
}

std::string encode_reply(std::string_view id,
                         std::span<const StepLogProbs> logprobs) {
  ordered_json j;
  j["id"] = id;
  j["logprobs"] = ordered_json::array();
  for (const auto& row : logprobs) j["logprobs"].push_back(row);
  return j.dump();
}

std::string encode_error(std::string_view id, std::string_view code,
                         std::string_view message) {
  ordered_json j;
  j["id"] = id;
  j["error"] = {{"code", code}, {"message", message}};
  return j.dump();
}

std::vector<StepLogProbs> parse_reply(std::string_view line,
                                      std::string_view expected_id,
                                      std::size_t expected_count,
                                      std::size_t expected_steps) {
  const auto j = parse_object(line, "reply");
  const auto id_it = j.find("id");
  if (id_it == j.end() || !id_it->is_string()) {
    protocol_error("reply has no string id");
  }
  const auto id = id_it->get<std::string>();
  if (id != expected_id) {
    protocol_error("reply id '" + id + "' does not match request id '" +
                   std::string(expected_id) + "'");
  }
  if (const auto err = j.find("error"); err != j.end()) {
    const std::string code =
        err->is_object() ? err->value("code", std::string("unknown")) : "unknown";
    const std::string message =
        err->is_object() ? err->value("message", std::string()) : "";
    protocol_error("server error " + code + ": " + message);
  }
  std::vector<StepLogProbs> out;
  try {
    out = j.at("logprobs").get<std::vector<StepLogProbs>>();
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("reply logprobs error: ") + e.what());
  }
  if (out.size() != expected_count) {
    protocol_error("reply has " + std::to_string(out.size()) +
                   " rows, expected " + std::to_string(expected_count));
  }
  for (const auto& row : out) {
    if (row.size() != expected_steps) {
      protocol_error("reply row has " + std::to_string(row.size()) +
                     " steps, expected " + std::to_string(expected_steps));
    }
  }
  return out;
}

}  // namespace protocol

namespace {

[[noreturn]] void unavailable(const std::string& message) {
  throw Error(ErrorCode::kRemoteUnavailable, message);
}

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

// ---------------------------------------------------------------------------
// StdioTransport

StdioTransport::StdioTransport(std::string command, std::size_t max_inflight,
                               std::chrono::milliseconds timeout)
    : command_(std::move(command)),
      max_inflight_(std::max<std::size_t>(1, max_inflight)),
      timeout_(timeout) {
  ignore_sigpipe();
}

StdioTransport::~StdioTransport() { stop(); }

void StdioTransport::stop() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == 0) {
      ::kill(-pid_, SIGTERM);
      ::waitpid(pid_, &status, 0);
    } else {
      ::kill(-pid_, SIGTERM);  // stragglers forked by the shell
    }
  }
  pid_ = -1;
  buffer_.clear();
}

std::string StdioTransport::connect() {
  stop();
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) unavailable("pipe() failed");
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    unavailable("pipe() failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    unavailable("fork() failed");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  return read_line();
}

void StdioTransport::write_line(const std::string& line) {
  std::string data = line;
  data.push_back('\n');
  std::size_t written = 0;
  while (written < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      unavailable(std::string("write to model server failed: ") + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

std::string StdioTransport::read_line() {
  while (true) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout_.count()));
    if (ready == 0) unavailable("model server timed out");
    if (ready < 0) {
      if (errno == EINTR) continue;
      unavailable("poll() failed");
    }
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      unavailable("read from model server failed");
    }
    if (n == 0) unavailable("model server closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::vector<std::string> StdioTransport::exchange(
    std::span<const std::string> request_lines) {
  if (pid_ <= 0) unavailable("model server is not running");
  std::vector<std::string> replies;
  replies.reserve(request_lines.size());
  std::size_t sent = 0;
  while (sent < request_lines.size() && sent < max_inflight_) {
    write_line(request_lines[sent++]);
  }
  while (replies.size() < request_lines.size()) {
    replies.push_back(read_line());
    if (sent < request_lines.size()) write_line(request_lines[sent++]);
  }
  return replies;
}

// ---------------------------------------------------------------------------
// HttpTransport

HttpTransport::HttpTransport(std::string endpoint, std::size_t max_inflight,
                             std::chrono::milliseconds timeout)
    : max_inflight_(std::max<std::size_t>(1, max_inflight)), timeout_(timeout) {
  const auto scheme = endpoint.find("://");
  const auto path_start =
      endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  host_ = endpoint.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (base_path_.size() >= 6 &&
      base_path_.compare(base_path_.size() - 6, 6, "/score") == 0) {
    base_path_.resize(base_path_.size() - 6);
  }
}

namespace {

httplib::Client make_client(const std::string& host,
                            std::chrono::milliseconds timeout) {
  httplib::Client client(host);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

std::string trim_newlines(std::string body) {
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) {
    body.pop_back();
  }
  return body;
}

}  // namespace

std::string HttpTransport::connect() {
  auto client = make_client(host_, timeout_);
  auto res = client.Get(base_path_ + "/handshake");
  if (!res) unavailable("model server at " + host_ + " is unreachable");
  if (res->status >= 500) {
    unavailable("model server handshake failed with status " +
                std::to_string(res->status));
  }
  return trim_newlines(res->body);
}

std::vector<std::string> HttpTransport::exchange(
    std::span<const std::string> request_lines) {
  std::vector<std::string> replies(request_lines.size());
  const std::string path = base_path_ + "/score";
  for (std::size_t start = 0; start < request_lines.size(); start += max_inflight_) {
    const std::size_t stop = std::min(request_lines.size(), start + max_inflight_);
    std::vector<std::future<std::string>> pending;
    for (std::size_t k = start; k < stop; ++k) {
      pending.push_back(std::async(std::launch::async, [&, k] {
        auto client = make_client(host_, timeout_);
        auto res = client.Post(path, request_lines[k], "application/json");
        if (!res) unavailable("model server at " + host_ + " is unreachable");
        if (res->status >= 500) {
          unavailable("model server returned status " + std::to_string(res->status));
        }
        return trim_newlines(res->body);
      }));
    }
    for (std::size_t k = start; k < stop; ++k) {
      replies[k] = pending[k - start].get();
    }
  }
  return replies;
}

// ---------------------------------------------------------------------------
// RemoteGenerator

template <typename Fn>
auto RemoteGenerator::with_retries(Fn&& fn) const {
  const int attempts = std::max(1, options_.attempts);
  auto backoff = options_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      if (!connected_) {
        const auto handshake = protocol::parse_handshake(transport_->connect());
        if (handshake_.version != 0 && !(handshake == handshake_)) {
          throw Error(ErrorCode::kModelProtocolError,
                      "model server handshake changed after reconnect");
        }
        handshake_ = handshake;
        connected_ = true;
      }
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kRemoteUnavailable) throw;
      connected_ = false;
      if (attempt >= attempts) {
        throw Error(ErrorCode::kRemoteUnavailable,
                    std::string(e.what()) + " (after " +
                        std::to_string(attempts) + " attempts)");
      }
      spdlog::warn("model server attempt {} failed: {}; retrying in {} ms",
                   attempt, e.what(), backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

RemoteGenerator::RemoteGenerator(std::unique_ptr<Transport> transport,
                                 RemoteOptions options)
    : transport_(std::move(transport)), options_(options) {
  std::lock_guard lock(mutex_);
  with_retries([] { return 0; });
  manifest_.kind = ModelKind::kRemote;
  manifest_.normalized = handshake_.normalized;
  manifest_.max_batch = handshake_.max_batch;
  manifest_.vocabulary_policy = "server-defined";
  manifest_.description = "remote lerg-score server";
}

std::unique_ptr<RemoteGenerator> RemoteGenerator::over_stdio(
    std::string command, RemoteOptions options) {
  return std::make_unique<RemoteGenerator>(
      std::make_unique<StdioTransport>(std::move(command), options.max_inflight,
                                       options.timeout),
      options);
}

std::unique_ptr<RemoteGenerator> RemoteGenerator::over_http(
    std::string endpoint, RemoteOptions options) {
  return std::make_unique<RemoteGenerator>(
      std::make_unique<HttpTransport>(std::move(endpoint), options.max_inflight,
                                      options.timeout),
      options);
}

std::vector<StepLogProbs> RemoteGenerator::score_batch_impl(
    std::span<const std::vector<std::string>> contexts,
    const SegmentedText& response) const {
  std::lock_guard lock(mutex_);
  const std::size_t chunk = std::max<std::size_t>(1, handshake_.max_batch);
  std::vector<std::string> ids;
  std::vector<std::string> lines;
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < contexts.size(); start += chunk) {
    const std::size_t count = std::min(chunk, contexts.size() - start);
    ids.push_back("r" + std::to_string(next_request_++));
    lines.push_back(protocol::encode_request(
        ids.back(), contexts.subspan(start, count), response.segments()));
    sizes.push_back(count);
  }
  const auto replies = with_retries([&] { return transport_->exchange(lines); });
  std::vector<StepLogProbs> out;
  out.reserve(contexts.size());
  for (std::size_t r = 0; r < replies.size(); ++r) {
    auto rows = protocol::parse_reply(replies[r], ids[r], sizes[r], response.size());
    for (auto& row : rows) out.push_back(std::move(row));
  }
  return out;
}

}  // namespace lerg
