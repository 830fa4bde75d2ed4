#pragma once

// In-process OpenAI-compatible stub endpoint for judge-client tests.
// Replies are scripted per call index; the server also tracks the maximum
// number of concurrently executing requests.

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace judgestub {

struct Reply {
  int status = 200;
  std::string content;  // message content for 200 replies
};

class StubServer {
 public:
  // script(call_index, request_body_json) -> Reply
  using Script = std::function<Reply(size_t, const nlohmann::json&)>;

  explicit StubServer(Script script) : script_(std::move(script)) {
    server_.Post("/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int now = 1 + inflight_.fetch_add(1);
      int seen = max_inflight_.load();
      while (now > seen && !max_inflight_.compare_exchange_weak(seen, now)) {
      }
      handle(req, res);
      inflight_.fetch_sub(1);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  size_t calls() const { return calls_.load(); }
  int max_inflight() const { return max_inflight_.load(); }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mutex_);
    return auth_headers_;
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    size_t index = calls_.fetch_add(1);
    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
    {
      std::lock_guard lock(mutex_);
      auth_headers_.push_back(req.get_header_value("Authorization"));
      if (body.is_object() && body.contains("messages") && !body["messages"].empty())
        prompts_.push_back(body["messages"].back().value("content", ""));
    }
    Reply reply = script_(index, body);
    if (reply.status != 200) {
      res.status = reply.status;
      res.set_content("{\"error\":\"scripted\"}", "application/json");
      return;
    }
    nlohmann::json out{
        {"id", "stub"},
        {"object", "chat.completion"},
        {"choices",
         nlohmann::json::array(
             {{{"index", 0},
               {"message", {{"role", "assistant"}, {"content", reply.content}}},
               {"finish_reason", "stop"}}})}};
    res.set_content(out.dump(), "application/json");
  }

  httplib::Server server_;
  Script script_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<size_t> calls_{0};
  std::atomic<int> inflight_{0};
  std::atomic<int> max_inflight_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
  std::vector<std::string> auth_headers_;
};

inline StubServer always_reply(const std::string& content) {
  return StubServer([content](size_t, const nlohmann::json&) { return Reply{200, content}; });
}

}  // namespace judgestub
