#pragma once

// HTTP front end for the reward engine.
//
//   POST /reward        one request object -> breakdown
//   POST /reward/batch  {"items": [request, ...], "jobs": n} -> {"results": [...]}
//   GET  /healthz

#include <httplib.h>

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqlrl/json_io.hpp"
#include "sqlrl/reward_engine.hpp"

namespace sqlrl {

inline int http_status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::DbNotFound: return 404;
    case ErrorKind::GoldExecutionError: return 422;
    case ErrorKind::MalformedInput:
    case ErrorKind::InvalidArgument:
    case ErrorKind::EmptyInput:
    case ErrorKind::UnterminatedLiteral: return 400;
    case ErrorKind::ConnectionError: return 503;
    default: return 500;
  }
}

class RewardService {
 public:
  RewardService(RewardEngine& engine, bool verbose = false) : engine_(engine), verbose_(verbose) {
    server_.Post("/reward", [this](const httplib::Request& req, httplib::Response& res) { on_reward(req, res); });
    server_.Post("/reward/batch",
                 [this](const httplib::Request& req, httplib::Response& res) { on_batch(req, res); });
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
  }

  /// Binds; port 0 picks a free port. Returns the bound port. Throws
  /// ConnectionError when the address cannot be bound.
  int bind(const std::string& host, int port) {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw Error(ErrorKind::ConnectionError, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop() is called.
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_error(httplib::Response& res, ErrorKind k, const std::string& msg) {
    res.status = http_status_for(k);
    res.set_content(error_json(k, msg).dump(), "application/json");
  }

  void on_reward(const httplib::Request& req, httplib::Response& res) {
    try {
      auto r = reward_request_from_json(json::parse(req.body));
      auto b = engine_.score_response(r.response, r.gold);
      res.set_content(to_json(b, verbose_).dump(), "application/json");
    } catch (const json::exception& e) {
      send_error(res, ErrorKind::MalformedInput, e.what());
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    }
  }

  void on_batch(const httplib::Request& req, httplib::Response& res) {
    try {
      auto body = json::parse(req.body);
      if (!body.is_object() || !body.contains("items") || !body["items"].is_array())
        throw Error(ErrorKind::MalformedInput, "batch body needs an \"items\" array");
      std::vector<std::string> responses;
      std::vector<GoldRecord> golds;
      for (const auto& item : body["items"]) {
        auto r = reward_request_from_json(item);
        responses.push_back(std::move(r.response));
        golds.push_back(std::move(r.gold));
      }
      unsigned jobs = body.value("jobs", 1u);
      json out = json::array();
      for (const auto& br : engine_.score_batch(responses, golds, jobs)) {
        if (br.reward)
          out.push_back(to_json(*br.reward, verbose_));
        else
          out.push_back(error_json(*br.error_kind, br.error_message));
      }
      res.set_content(json{{"results", out}}.dump(), "application/json");
    } catch (const json::exception& e) {
      send_error(res, ErrorKind::MalformedInput, e.what());
    } catch (const Error& e) {
      send_error(res, e.kind(), e.what());
    }
  }

  RewardEngine& engine_;
  bool verbose_;
  httplib::Server server_;
};

}  // namespace sqlrl
