#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "study_service.hpp"

// after Eigen: <resolv.h>, pulled in by httplib, defines a macro named _res
#include <httplib.h>

namespace lf {

/// HTTP front end:
///   GET  /studies/{id}/next?worker=W
///   POST /studies/{id}/answers   {"worker", "question", "choice"}
///   GET  /studies/{id}/results
///   GET  /media/{id}/{file}.png
/// The results endpoint is for the experimenter; when `results_token` is set it
/// requires ?token=... .
class StudyServer {
 public:
  explicit StudyServer(const std::vector<std::filesystem::path>& study_dirs, std::string results_token = "",
                       std::chrono::seconds reservation_ttl = std::chrono::seconds(600))
      : token_(std::move(results_token)) {
    for (const auto& dir : study_dirs) {
      auto state = std::make_shared<StudyState>(dir, reservation_ttl);
      const std::string id = state->definition().id;
      require(!studies_.count(id), "duplicate study id " + id);
      require(server_.set_mount_point("/media/" + id, (dir / "media").string()), "cannot serve media from " + dir.string());
      studies_[id] = std::move(state);
    }
    server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                 {"Access-Control-Allow-Headers", "Content-Type"},
                                 {"Cache-Control", "no-store"}});
    routes();
  }

  StudyState& study(const std::string& id) { return *studies_.at(id); }

  /// Binds to `port` (0 = any free port) and returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    require(bound > 0, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  void listen_after_bind() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  StudyState* find(const httplib::Request& req, httplib::Response& res) {
    const auto it = studies_.find(req.matches[1]);
    if (it == studies_.end()) {
      reply(res, 404, {{"error", "unknown study"}});
      return nullptr;
    }
    return it->second.get();
  }

  void routes() {
    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get(R"(/studies/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req, res);
      if (!s) return;
      const std::string worker = req.get_param_value("worker");
      if (worker.empty()) return reply(res, 400, {{"error", "missing worker parameter"}});
      reply(res, 200, s->next_question(worker));
    });

    server_.Post(R"(/studies/([^/]+)/answers)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req, res);
      if (!s) return;
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const std::exception&) {
        return reply(res, 400, {{"error", "body must be JSON"}});
      }
      if (!body.is_object() || !body.contains("worker") || !body.contains("question") || !body.contains("choice") ||
          !body["worker"].is_string() || !body["question"].is_string() || !body["choice"].is_string())
        return reply(res, 400, {{"error", "expected {worker, question, choice}"}});
      const SubmitStatus st = s->submit(body["worker"], body["question"], body["choice"]);
      int code = 200;
      switch (st) {
        case SubmitStatus::Accepted: code = 200; break;
        case SubmitStatus::Duplicate: code = 409; break;
        case SubmitStatus::NotIssued: code = 409; break;
        case SubmitStatus::UnknownQuestion: code = 404; break;
        case SubmitStatus::UnknownWorker: code = 404; break;
        case SubmitStatus::BadChoice: code = 400; break;
      }
      reply(res, code, {{"status", to_string(st)}});
    });

    server_.Get(R"(/studies/([^/]+)/results)", [this](const httplib::Request& req, httplib::Response& res) {
      auto* s = find(req, res);
      if (!s) return;
      if (!token_.empty() && req.get_param_value("token") != token_)
        return reply(res, 403, {{"error", "results require the experimenter token"}});
      try {
        const auto& def = s->definition();
        Json out = s->results().to_json();
        out["study"] = def.id;
        out["method_a"] = def.method_a;
        out["method_b"] = def.method_b;
        reply(res, 200, out);
      } catch (const Error& e) {
        reply(res, 409, {{"error", e.what()}});
      }
    });
  }

  httplib::Server server_;
  std::map<std::string, std::shared_ptr<StudyState>> studies_;
  std::string token_;
};

}  // namespace lf
