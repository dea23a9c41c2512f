#pragma once

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace eqr {

class Engine;

/// JSON API over an Engine:
///   POST /api/recommend   {"query", "method", "top_k"?, "k"?, "n"?}
///   GET  /api/methods
///   GET  /api/datasets
///   GET  /api/items/{id}
///   GET  /healthz
/// Malformed requests get 400, unknown methods 422, provider failures 502.
class Service {
 public:
  explicit Service(const Engine& engine);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks serving on host:port until stop().
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; follow with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  const Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace eqr
