#pragma once

#include <stdexcept>
#include <string>

#include "httplib.h"
#include "wpp/api.hpp"

namespace wpp {

inline ApiRequest to_api_request(const httplib::Request& r) {
  ApiRequest out;
  out.method = r.method;
  out.path = r.path;
  for (const auto& [k, v] : r.params) out.query[k] = v;
  out.body = r.body;
  out.token = r.get_header_value(kTokenHeader);
  return out;
}

// Mounts every /v1 route of `api` on `server`.
inline void mount(httplib::Server& server, Api& api) {
  auto handler = [&api](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = api.handle(to_api_request(req));
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get(R"(/v1/.*)", handler);
  server.Post(R"(/v1/.*)", handler);
  // The browser console is served from another origin.
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", std::string("Content-Type, ") + kTokenHeader}});
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

// Sends an ApiRequest to a running server; throws ConnectionError when the
// server cannot be reached.
class HttpBackend {
 public:
  explicit HttpBackend(const std::string& endpoint) : client_(endpoint) {
    if (!client_.is_valid()) throw ConnectionError("invalid endpoint '" + endpoint + "'");
    client_.set_connection_timeout(5, 0);
    client_.set_read_timeout(120, 0);
  }

  ApiResponse send(const ApiRequest& req) {
    httplib::Headers headers;
    if (!req.token.empty()) headers.emplace(kTokenHeader, req.token);
    httplib::Params params(req.query.begin(), req.query.end());
    const std::string target = params.empty() ? req.path : httplib::append_query_params(req.path, params);
    httplib::Result res = req.method == "POST"
                              ? client_.Post(target, headers, req.body, "application/json")
                              : client_.Get(target, headers);
    if (!res) throw ConnectionError("cannot reach control plane: " + httplib::to_string(res.error()));
    ApiResponse out;
    out.status = res->status;
    out.content_type = res->get_header_value("Content-Type");
    out.body = res->body;
    return out;
  }

 private:
  httplib::Client client_;
};

}  // namespace wpp
