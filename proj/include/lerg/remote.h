#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lerg/models.h"

namespace lerg {

inline constexpr std::string_view kProtocolName = "lerg-score";
inline constexpr int kProtocolVersion = 1;

// Wire messages, one JSON object per line.
namespace protocol {

struct Handshake {
  std::string protocol;
  int version = 0;
  bool normalized = false;
  std::size_t max_batch = 0;

  friend bool operator==(const Handshake&, const Handshake&) = default;
};

std::string encode_handshake(const Handshake& handshake);
// Throws ModelProtocolError on anything but a version-1 lerg-score handshake.
Handshake parse_handshake(std::string_view line);

// {"id":..,"contexts":[[..]..],"response":[..]} without a trailing newline.
std::string encode_request(std::string_view id,
                           std::span<const std::vector<std::string>> contexts,
                           std::span<const std::string> response);

struct Request {
  std::string id;
  std::vector<std::vector<std::string>> contexts;
  std::vector<std::string> response;
};
Request parse_request(std::string_view line);

std::string encode_reply(std::string_view id,
                         std::span<const StepLogProbs> logprobs);
std::string encode_error(std::string_view id, std::string_view code,
                         std::string_view message);

// Decodes a reply and checks its id and shape. Error replies and mismatches
// raise ModelProtocolError.
std::vector<StepLogProbs> parse_reply(std::string_view line,
                                      std::string_view expected_id,
                                      std::size_t expected_count,
                                      std::size_t expected_steps);

}  // namespace protocol

// Line-oriented connection to a model server.
class Transport {
 public:
  virtual ~Transport() = default;
  // (Re)establishes the connection and returns the handshake line. Throws
  // RemoteUnavailable on failure.
  virtual std::string connect() = 0;
  // Sends each request line and returns the reply lines in request order.
  // Throws RemoteUnavailable on transport failure.
  virtual std::vector<std::string> exchange(
      std::span<const std::string> request_lines) = 0;
};

// Child process speaking the protocol on stdin/stdout, started via /bin/sh -c.
class StdioTransport final : public Transport {
 public:
  StdioTransport(std::string command, std::size_t max_inflight,
                 std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  ~StdioTransport() override;

  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::string connect() override;
  std::vector<std::string> exchange(
      std::span<const std::string> request_lines) override;

 private:
  void stop();
  void write_line(const std::string& line);
  std::string read_line();

  std::string command_;
  std::size_t max_inflight_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// POST /score with one request object per call; GET /handshake for the
// handshake object.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string endpoint, std::size_t max_inflight,
                std::chrono::milliseconds timeout);

  std::string connect() override;
  std::vector<std::string> exchange(
      std::span<const std::string> request_lines) override;

 private:
  std::string host_;  // scheme://host:port
  std::string base_path_;
  std::size_t max_inflight_;
  std::chrono::milliseconds timeout_;
};

struct RemoteOptions {
  std::size_t max_inflight = 4;
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds timeout{30000};
};

class RemoteGenerator final : public Generator {
 public:
  RemoteGenerator(std::unique_ptr<Transport> transport,
                  RemoteOptions options = {});

  static std::unique_ptr<RemoteGenerator> over_stdio(std::string command,
                                                     RemoteOptions options = {});
  static std::unique_ptr<RemoteGenerator> over_http(std::string endpoint,
                                                    RemoteOptions options = {});

  const Manifest& manifest() const override { return manifest_; }
  const protocol::Handshake& handshake() const { return handshake_; }

 protected:
  std::vector<StepLogProbs> score_batch_impl(
      std::span<const std::vector<std::string>> contexts,
      const SegmentedText& response) const override;

 private:
  template <typename Fn>
  auto with_retries(Fn&& fn) const;

  std::unique_ptr<Transport> transport_;
  RemoteOptions options_;
  mutable protocol::Handshake handshake_;
  Manifest manifest_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_request_ = 0;
  mutable bool connected_ = false;
};

}  // namespace lerg
