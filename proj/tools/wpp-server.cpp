#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "wpp/api.hpp"
#include "wpp/http.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wpp-server: power profile control plane"};
  std::string catalog = "data/calibration.json", state = ".wpp-state", host = "127.0.0.1";
  int port = 8080;
  bool realtime = false;
  app.add_option("--catalog", catalog, "calibration file")->check(CLI::ExistingFile);
  app.add_option("--state", state, "state directory");
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_flag("--realtime", realtime, "advance simulated time with the wall clock");
  CLI11_PARSE(app, argc, argv);

  try {
    wpp::ControlPlane cp(wpp::ProfileCatalog::load(catalog));
    wpp::Store store(state);
    store.attach(cp);
    wpp::Api api(cp, &store);

    httplib::Server server;
    wpp::mount(server, api);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    std::atomic<bool> running{true};
    std::thread ticker;
    if (realtime) {
      ticker = std::thread([&] {
        const double step = cp.fleet().tick_seconds;
        while (running) {
          std::this_thread::sleep_for(std::chrono::duration<double>(step));
          if (running) api.tick(step);
        }
      });
    }
    std::cerr << "wpp-server listening on http://" << host << ":" << port << "\n";
    const bool ok = server.listen(host, port);
    running = false;
    if (ticker.joinable()) ticker.join();
    store.compact(cp);
    if (!ok) {
      std::cerr << "wpp-server: cannot listen on " << host << ":" << port << "\n";
      return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "wpp-server: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
