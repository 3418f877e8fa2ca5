#pragma once

// HTTP routes for the tutoring service.

#include <string>

#include "httplib.h"
#include "hnu/service.hpp"

namespace hnu {

/// Mounts the session endpoints on `server`. Errors come back as
/// {"error": message} with the status the service chose; malformed JSON is
/// a 422.
inline void mount_routes(httplib::Server& server, TutorService& service, const std::string& origin = "*") {
  TutorService* svc = &service;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto handle = [](httplib::Response& res, auto&& f) {
    try {
      res.set_content(f().dump(), "application/json");
      res.status = 200;
    } catch (const ServiceError& ex) {
      res.status = ex.status();
      res.set_content(nlohmann::json{{"error", ex.what()}}.dump(), "application/json");
    } catch (const std::exception& ex) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", ex.what()}}.dump(), "application/json");
    }
  };
  auto body_of = [](const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    nlohmann::json j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw ServiceError(422, "request body is not valid JSON");
    return j;
  };

  server.Post("/sessions", [svc, handle, body_of](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc->create(body_of(req)); });
  });
  server.Get(R"(/sessions/([^/]+))", [svc, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc->get(req.matches[1]); });
  });
  server.Post(R"(/sessions/([^/]+)/steps)", [svc, handle, body_of](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc->submit(req.matches[1], body_of(req)); });
  });
  server.Post(R"(/sessions/([^/]+)/hint)", [svc, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc->hint(req.matches[1]); });
  });
  server.Post(R"(/sessions/([^/]+)/advance)", [svc, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return svc->advance(req.matches[1]); });
  });
}

}  // namespace hnu
