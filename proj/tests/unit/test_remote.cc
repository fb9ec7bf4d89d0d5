#include <gtest/gtest.h>

#include <cfloat>
#include <cmath>
#include <cstring>
#include <atomic>
#include <filesystem>
#include <functional>
#include <thread>

#include "lerg/explain.h"
#include "lerg/remote.h"
#include "lerg/report.h"
#include "lerg/synthetic.h"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace lerg {
namespace {

namespace fs = std::filesystem;

std::string fixture(const std::string& name) {
  return read_file(fs::path(LERG_FIXTURE_DIR) / "protocol" / name);
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

TEST(ProtocolFixtures, HandshakeByteExact) {
  const protocol::Handshake hs{"lerg-score", 1, true, 64};
  EXPECT_EQ(protocol::encode_handshake(hs) + "\n", fixture("handshake.json"));
  EXPECT_EQ(protocol::parse_handshake(first_line(fixture("handshake.json"))), hs);
}

TEST(ProtocolFixtures, RequestByteExact) {
  const std::vector<std::vector<std::string>> contexts{{"how", "are", "you"}, {"are", "you"}, {}};
  const std::vector<std::string> response{"fine", "thanks"};
  EXPECT_EQ(protocol::encode_request("abc", contexts, response) + "\n", fixture("request.json"));
  const auto req = protocol::parse_request(first_line(fixture("request.json")));
  EXPECT_EQ(req.id, "abc");
  EXPECT_EQ(req.contexts, contexts);
  EXPECT_EQ(req.response, response);
}

TEST(ProtocolFixtures, ReplyByteExact) {
  const double v = std::log(1.0 / 100.0);
  const std::vector<StepLogProbs> rows(3, StepLogProbs{v, v});
  EXPECT_EQ(protocol::encode_reply("abc", rows) + "\n", fixture("reply.json"));
  const auto parsed = protocol::parse_reply(first_line(fixture("reply.json")), "abc", 3, 2);
  EXPECT_EQ(parsed, rows);
}

TEST(ProtocolFixtures, ErrorReplyRoundTrip) {
  EXPECT_EQ(protocol::encode_error("abc", "bad_request",
                                   "contexts must be a list of string lists") + "\n",
            fixture("error.json"));
  try {
    protocol::parse_reply(first_line(fixture("error.json")), "abc", 3, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kModelProtocolError);
    EXPECT_NE(std::string(e.what()).find("bad_request"), std::string::npos);
  }
}

TEST(ProtocolFixtures, SeventeenDigitFloatsAreBitExact) {
  const auto rows = protocol::parse_reply(first_line(fixture("float17.json")), "f17", 1, 4);
  const double expected[] = {-0.1, -DBL_MIN, -DBL_MAX, -1.0 / 3.0};
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(std::memcmp(&rows[0][k], &expected[k], sizeof(double)), 0) << k;
  }
}

TEST(Protocol, ShapeAndIdChecks) {
  const auto line = first_line(fixture("reply.json"));
  EXPECT_THROW(protocol::parse_reply(line, "other", 3, 2), Error);
  EXPECT_THROW(protocol::parse_reply(line, "abc", 2, 2), Error);
  EXPECT_THROW(protocol::parse_reply(line, "abc", 3, 3), Error);
  EXPECT_THROW(protocol::parse_reply("not json", "abc", 3, 2), Error);
  EXPECT_THROW(protocol::parse_handshake(
                   "{\"protocol\":\"lerg-score\",\"version\":2,\"normalized\":true,\"max_batch\":1}"),
               Error);
  EXPECT_THROW(protocol::parse_handshake(
                   "{\"protocol\":\"lerg-score\",\"version\":1,\"normalized\":true,\"max_batch\":0}"),
               Error);
  EXPECT_THROW(protocol::parse_request("{\"id\":\"x\",\"contexts\":\"bad\",\"response\":[]}"),
               Error);
}

class StubServer : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lerg_remote_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    inst_ = ngram_instances(4, 13, 5, 8);
    model_file_ = (dir_ / "model.json").string();
    write_file(model_file_, ngram_to_json(inst_.model->spec()));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string command(const std::string& flags) const {
    return std::string(LERG_STUB_SERVER) + " " + flags;
  }

  static RemoteOptions fast() {
    RemoteOptions o;
    o.initial_backoff = std::chrono::milliseconds(10);
    o.timeout = std::chrono::milliseconds(2000);
    return o;
  }

  fs::path dir_;
  NgramInstances inst_;
  std::string model_file_;
};

TEST_F(StubServer, ReproducesInProcessExplanations) {
  auto remote = RemoteGenerator::over_stdio(
      command("--model-file " + model_file_ + " --max-batch 7"), fast());
  EXPECT_TRUE(remote->manifest().normalized);
  EXPECT_EQ(remote->handshake().max_batch, 7u);
  ExplainOptions options;
  options.plan.sample_count = 150;
  for (const auto& ex : inst_.examples) {
    EXPECT_LE(lerg_s(*remote, ex, options).max_abs_diff(lerg_s(*inst_.model, ex, options)),
              1e-12);
    EXPECT_LE(exact_lerg_s(*remote, ex).max_abs_diff(exact_lerg_s(*inst_.model, ex)), 1e-12);
    EXPECT_LE(fit_lime(*remote, ex, options).max_abs_diff(fit_lime(*inst_.model, ex, options)),
              1e-12);
  }
}

TEST_F(StubServer, UniformScorer) {
  auto remote = RemoteGenerator::over_stdio(command("--uniform 100"), fast());
  const std::vector<std::vector<std::string>> batch{{"a"}, {}, {"b", "c"}};
  const auto rows = remote->score_batch(batch, SegmentedText::from_tokens({"x", "y"}));
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    for (double v : row) EXPECT_NEAR(v, -4.60517, 1e-5);
  }
}

TEST_F(StubServer, RestartsAfterCrash) {
  auto remote = RemoteGenerator::over_stdio(
      command("--model-file " + model_file_ + " --crash-once " + (dir_ / "marker").string()),
      fast());
  const auto& ex = inst_.examples.front();
  const auto scores = remote->score(ex.context.segments(), ex.response);
  EXPECT_TRUE(fs::exists(dir_ / "marker"));
  EXPECT_EQ(scores, inst_.model->score(ex.context.segments(), ex.response));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kValidationError;
}

TEST_F(StubServer, FailureModes) {
  const auto response = SegmentedText::from_tokens({"x"});
  const std::vector<std::string> ctx{"a"};
  EXPECT_EQ(code_of([&] { RemoteGenerator::over_stdio(command("--bad-handshake"), fast()); }),
            ErrorCode::kModelProtocolError);
  EXPECT_EQ(code_of([&] {
              RemoteGenerator::over_stdio("/nonexistent/lerg-model-server", fast());
            }),
            ErrorCode::kRemoteUnavailable);
  auto errors = RemoteGenerator::over_stdio(command("--error-replies"), fast());
  EXPECT_EQ(code_of([&] { errors->score(ctx, response); }), ErrorCode::kModelProtocolError);
  auto garbage = RemoteGenerator::over_stdio(command("--garbage"), fast());
  EXPECT_EQ(code_of([&] { garbage->score(ctx, response); }), ErrorCode::kModelProtocolError);
  auto quick = fast();
  quick.timeout = std::chrono::milliseconds(200);
  EXPECT_EQ(code_of([&] { RemoteGenerator::over_stdio(command("--silent"), quick); }),
            ErrorCode::kRemoteUnavailable);
}

TEST_F(StubServer, HttpTransportMatchesInProcess) {
  httplib::Server server;
  const auto& model = *inst_.model;
  std::atomic<bool> fail_scores{false};
  server.Get("/v1/handshake", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(protocol::encode_handshake({"lerg-score", 1, true, 5}) + "\n",
                    "application/json");
  });
  server.Post("/v1/score", [&](const httplib::Request& req, httplib::Response& res) {
    if (fail_scores) {
      res.status = 503;
      return;
    }
    const auto r = protocol::parse_request(req.body);
    const auto rows = model.score_batch(r.contexts, SegmentedText::from_tokens(r.response));
    res.set_content(protocol::encode_reply(r.id, rows) + "\n", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  {
    auto remote =
        RemoteGenerator::over_http("http://127.0.0.1:" + std::to_string(port) + "/v1", fast());
    ExplainOptions options;
    options.plan.sample_count = 60;
    const auto& ex = inst_.examples.front();
    EXPECT_LE(lerg_s(*remote, ex, options).max_abs_diff(lerg_s(model, ex, options)), 1e-12);
    fail_scores = true;
    EXPECT_EQ(code_of([&] { remote->score(ex.context.segments(), ex.response); }),
              ErrorCode::kRemoteUnavailable);
  }
  server.stop();
  thread.join();
  EXPECT_EQ(code_of([&] {
              RemoteGenerator::over_http("http://127.0.0.1:" + std::to_string(port), fast());
            }),
            ErrorCode::kRemoteUnavailable);
}

}  // namespace
}  // namespace lerg
