#include "flowsr/reward/remote_scorer.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "flowsr/core/errors.hpp"

namespace flowsr::reward {

using nlohmann::json;

namespace {

json image_to_json(const ImageF& img) {
  json j;
  j["h"] = img.height();
  j["w"] = img.width();
  j["c"] = img.channels();
  j["data"] = std::vector<float>(img.data(), img.data() + img.size());
  return j;
}

ImageF image_from_json(const json& j) {
  ImageF img(j.at("h").get<int>(), j.at("w").get<int>(), j.at("c").get<int>());
  const auto data = j.at("data").get<std::vector<float>>();
  if (data.size() != img.size()) throw InputError("remote scorer: image payload size mismatch");
  std::copy(data.begin(), data.end(), img.data());
  return img;
}

}  // namespace

struct RemoteScorer::Impl {
  std::string host;
  int port;
  int timeout_ms;
  int retries;

  json post(const json& body) const {
    std::string last_error;
    for (int attempt = 0; attempt <= retries; ++attempt) {
      httplib::Client client(host, port);
      client.set_connection_timeout(0, timeout_ms * 1000);
      client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
      auto res = client.Post("/v1/score", body.dump(), "application/json");
      if (res && res->status == 200) return json::parse(res->body);
      last_error = res ? "http status " + std::to_string(res->status)
                       : "transport error " + httplib::to_string(res.error());
    }
    throw NumericError("remote scorer: request failed after " + std::to_string(retries + 1) +
                       " attempts (" + last_error + ")");
  }
};

RemoteScorer::RemoteScorer(std::string host, int port, int timeout_ms, int retries)
    : impl_(new Impl{std::move(host), port, timeout_ms, retries}) {}

RemoteScorer::~RemoteScorer() = default;

double RemoteScorer::quality(const ImageF& img) const {
  json body;
  body["mode"] = "quality";
  body["image"] = image_to_json(img);
  return impl_->post(body).at("q").get<double>();
}

double RemoteScorer::fidelity(const ImageF& img, const ImageF& reference) const {
  json body;
  body["mode"] = "fidelity";
  body["image"] = image_to_json(img);
  body["reference"] = image_to_json(reference);
  return impl_->post(body).at("f").get<double>();
}

CompareOutcome RemoteScorer::compare(const ImageF& a, const ImageF& b) const {
  json body;
  body["mode"] = "compare";
  body["image"] = image_to_json(a);
  body["reference"] = image_to_json(b);
  const std::string outcome = impl_->post(body).at("outcome").get<std::string>();
  if (outcome == "first") return CompareOutcome::first;
  if (outcome == "second") return CompareOutcome::second;
  if (outcome == "tie") return CompareOutcome::tie;
  throw NumericError("remote scorer: unknown outcome '" + outcome + "'");
}

struct LoopbackScorerServer::Impl {
  const ScorerInterface& scorer;
  httplib::Server server;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;

  explicit Impl(const ScorerInterface& s) : scorer(s) {
    server.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const json body = json::parse(req.body);
        const std::string mode = body.at("mode").get<std::string>();
        const ImageF img = image_from_json(body.at("image"));
        json out;
        if (mode == "quality") {
          out["q"] = scorer.quality(img);
        } else if (mode == "fidelity") {
          out["f"] = scorer.fidelity(img, image_from_json(body.at("reference")));
        } else if (mode == "compare") {
          const CompareOutcome o = scorer.compare(img, image_from_json(body.at("reference")));
          out["outcome"] = o == CompareOutcome::first    ? "first"
                           : o == CompareOutcome::second ? "second"
                                                         : "tie";
        } else {
          res.status = 400;
          res.set_content("{\"error\":\"bad mode\"}", "application/json");
          return;
        }
        res.set_content(out.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        json err;
        err["error"] = e.what();
        res.set_content(err.dump(), "application/json");
      }
    });
    port = server.bind_to_any_port(host);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~Impl() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
};

LoopbackScorerServer::LoopbackScorerServer(const ScorerInterface& scorer)
    : impl_(new Impl(scorer)) {}

LoopbackScorerServer::~LoopbackScorerServer() = default;

int LoopbackScorerServer::port() const { return impl_->port; }

const std::string& LoopbackScorerServer::host() const { return impl_->host; }

}  // namespace flowsr::reward
