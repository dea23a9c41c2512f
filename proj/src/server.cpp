#include "eqr/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "eqr/error.hpp"
#include "eqr/recommender.hpp"

namespace eqr {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

json error_body(const std::string& message, const std::string& error_class = {}) {
  json j{{"error", message}};
  if (!error_class.empty()) j["error_class"] = error_class;
  return j;
}

}  // namespace

Service::Service(const Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) {
  auto& srv = *server_;

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  srv.Get("/api/methods", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"methods", all_method_ids()}});
  });

  srv.Get("/api/datasets", [this](const httplib::Request&, httplib::Response& res) {
    const auto m = manifest_of(engine_.dataset());
    reply(res, 200,
          {{"datasets", json::array({{{"name", m.name},
                                      {"queries", m.queries},
                                      {"items", m.items},
                                      {"passages", m.passages},
                                      {"labels", m.labels},
                                      {"encoder", engine_.index().fingerprint()}}})}});
  });

  srv.Get(R"(/api/items/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto* item = engine_.dataset().find_item(id);
    if (!item) return reply(res, 404, error_body("unknown item " + id));
    json passages = json::array();
    for (const auto& p : item->passages) passages.push_back({{"passage_id", p.passage_id}, {"text", p.text}});
    reply(res, 200, {{"item_id", item->item_id}, {"name", item->name}, {"passages", passages}});
  });

  srv.Post("/api/recommend", [this](const httplib::Request& req, httplib::Response& res) {
    RecommendRequest request;
    try {
      const auto body = json::parse(req.body);
      if (!body.is_object()) return reply(res, 400, error_body("request body must be a JSON object"));
      if (!body.contains("query") || !body["query"].is_string() || body["query"].get<std::string>().empty())
        return reply(res, 400, error_body("\"query\" must be a non-empty string"));
      request.query = body["query"].get<std::string>();
      if (body.contains("method")) {
        if (!body["method"].is_string()) return reply(res, 400, error_body("\"method\" must be a string"));
        request.method = body["method"].get<std::string>();
      }
      if (body.contains("top_k")) {
        if (!body["top_k"].is_number_unsigned() || body["top_k"].get<std::size_t>() == 0)
          return reply(res, 400, error_body("\"top_k\" must be a positive integer"));
        request.top_k = body["top_k"].get<std::size_t>();
      }
      if (body.contains("k")) {
        if (!body["k"].is_number_unsigned() || body["k"].get<int>() < 1)
          return reply(res, 400, error_body("\"k\" must be a positive integer"));
        request.k = body["k"].get<int>();
      }
      if (body.contains("n")) {
        if (!body["n"].is_number_unsigned() || body["n"].get<std::size_t>() == 0)
          return reply(res, 400, error_body("\"n\" must be a positive integer"));
        request.n = body["n"].get<std::size_t>();
      }
    } catch (const json::exception& e) {
      return reply(res, 400, error_body(std::string("malformed JSON: ") + e.what()));
    }

    try {
      QRMethod::parse(request.method);
    } catch (const ConfigError& e) {
      return reply(res, 422, error_body(e.what()));
    }

    try {
      reply(res, 200, to_json(engine_.recommend(request)));
    } catch (const ProviderError& e) {
      reply(res, 502, error_body(e.what(), e.error_class()));
    } catch (const ParseError& e) {
      reply(res, 502, error_body(e.what(), "unparseable_output"));
    } catch (const ConfigError& e) {
      reply(res, 422, error_body(e.what()));
    } catch (const std::exception& e) {
      spdlog::error("recommend failed: {}", e.what());
      reply(res, 500, error_body(e.what()));
    }
  });
}

Service::~Service() = default;

bool Service::listen(const std::string& host, int port) { return server_->listen(host, port); }

int Service::bind_to_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

void Service::stop() { server_->stop(); }

void Service::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace eqr
