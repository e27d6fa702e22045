#include <iostream>

#include "wpp/cli.hpp"
#include "wpp/http.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  auto http = [](const std::string& endpoint) -> wpp::cli::Transport {
    auto backend = std::make_shared<wpp::HttpBackend>(endpoint);
    return [backend](const wpp::ApiRequest& req) { return backend->send(req); };
  };
  return wpp::cli::run(args, std::cout, std::cerr, wpp::cli::process_env, http);
}
