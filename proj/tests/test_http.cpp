#include <gtest/gtest.h>

#include <thread>

#include "wpp/http.hpp"

using namespace wpp;

TEST(Http, LoopbackRoundTrip) {
  ControlPlane cp(ProfileCatalog::load(WPP_CALIBRATION));
  Api api(cp);
  httplib::Server server;
  mount(server, api);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackend client("http://127.0.0.1:" + std::to_string(port));
  auto r = client.send({"GET", "/v1/profiles", {{"status", "released"}}, "", ""});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.as_json().size(), 4u);

  const json body{{"pathway", "in_band"}, {"scope", {{"kind", "gpu"}, {"id", "gpu5"}}}, {"profile", "MAX_Q_INFERENCE"}};
  r = client.send({"POST", "/v1/apply", {}, body.dump(), "tenant-token"});
  EXPECT_EQ(r.status, 200) << r.body;
  EXPECT_EQ(cp.gpu_point(5), "MAX_Q_INFERENCE");
  r = client.send({"POST", "/v1/apply", {}, body.dump(), ""});
  EXPECT_EQ(r.status, 403);

  server.stop();
  t.join();
  EXPECT_THROW(client.send({"GET", "/v1/health", {}, "", ""}), ConnectionError);
}
