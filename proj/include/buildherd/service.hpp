#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "buildherd/server.hpp"

namespace httplib {
class Server;
}

namespace buildherd {

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

// Routes one request. `target` is the path with an optional query string.
//   POST /hooks/{repo_id}           hook intake, 202 (duplicate nonces flagged)
//   POST /projects/{id}/build       commanded build, 202 with a receipt
//   GET  /projects/{id}/status      classification, queue depth, last run
//   GET  /projects/{id}/runs        history, ?outcome=..&limit=..
//   GET  /health
HttpResponse handle_request(CiServer& server, std::string_view method, std::string_view target,
                            std::string_view body);

struct Endpoint {
  std::string host;
  int port = 0;
};

// "host:port"; throws kInvalidArgument.
Endpoint parse_endpoint(std::string_view text);

// HTTP/1.1 front end for a CiServer. No TLS and no authentication; binds to
// loopback unless configured otherwise.
class HttpService {
 public:
  explicit HttpService(CiServer& server);
  ~HttpService();

  // Returns the bound port (useful with port 0). Throws kInvalidArgument.
  int bind(const Endpoint& endpoint);
  void start();
  void stop();

 private:
  CiServer& server_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
};

}  // namespace buildherd
