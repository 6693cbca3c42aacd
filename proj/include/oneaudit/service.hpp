#pragma once

// JSON-over-HTTP front end for SessionManager.
//
//   POST /sessions               {strategy, alpha, seed, cap?, grid_size?, fixed_bet?, election?}
//   POST /sessions/{id}/mvr      {card_id, vote}
//   GET  /sessions/{id}
//
// Errors come back as {"error": <code>, "message": <text>}.

#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "oneaudit/error.hpp"
#include "oneaudit/session.hpp"

namespace oneaudit {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::SessionNotFound: return 404;
    case ErrorCode::OutOfOrderEntry:
    case ErrorCode::InvalidState: return 409;
    case ErrorCode::InvalidVote:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidConfig:
    case ErrorCode::BetOutOfRange:
    case ErrorCode::NonPositiveMargin:
    case ErrorCode::EmptyBatch: return 400;
    default: return 500;
  }
}

inline bool is_loopback(std::string_view host) {
  return host == "localhost" || host == "::1" || host.starts_with("127.");
}

class SessionService {
 public:
  explicit SessionService(SessionManager& sessions) : sessions_(sessions) {
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server_.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, 201, [&] { return sessions_.create(SessionParams::from_json(body(req))); });
    });
    server_.Post(R"(/sessions/([^/]+)/mvr)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, 200, [&] {
        const auto j = body(req);
        if (!j.contains("card_id") || !j.at("card_id").is_string()) {
          throw Error(ErrorCode::ParseError, "field 'card_id' must be a string");
        }
        if (!j.contains("vote") || !j.at("vote").is_string()) {
          throw Error(ErrorCode::InvalidVote, "field 'vote' must be a string");
        }
        return sessions_.enter(req.matches[1], j.at("card_id").get<std::string>(),
                               j.at("vote").get<std::string>());
      });
    });
    server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, 200, [&] { return sessions_.view(req.matches[1]); });
    });
  }

  /// Binds to a loopback address; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port) {
    if (!is_loopback(host)) {
      throw Error(ErrorCode::InvalidConfig, "the session service only binds to loopback addresses");
    }
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop() is called.
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static nlohmann::json body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw Error(ErrorCode::ParseError, "request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
  }

  template <class F>
  static void handle(httplib::Response& res, int ok_status, F&& fn) {
    nlohmann::json out;
    try {
      out = fn();
      res.status = ok_status;
    } catch (const Error& e) {
      res.status = http_status(e.code());
      out = {{"error", std::string(to_string(e.code()))}, {"message", e.message()}};
    } catch (const std::exception& e) {
      res.status = 500;
      out = {{"error", "Internal"}, {"message", e.what()}};
    }
    res.set_content(out.dump(), "application/json");
  }

  SessionManager& sessions_;
  httplib::Server server_;
};

}  // namespace oneaudit
