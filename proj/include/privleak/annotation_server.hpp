// Copyright 2026 The Privleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "json.hpp"
#include "privleak/annotation_store.hpp"
#include "privleak/attack_sim.hpp"
#include "privleak/error.hpp"
#include "privleak/image.hpp"
// Must follow Eigen.
#include "httplib.h"

namespace privleak {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kIncomplete: return 409;
    case ErrorCode::kValidation: return 422;
    case ErrorCode::kAuth: return 403;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kFormat: return 400;
    default: return 500;
  }
}

// Image refs are stored with a ".lkm" extension; clients always get PNG.
inline std::string image_url(const std::string& ref) {
  std::filesystem::path p(ref);
  p.replace_extension(".png");
  return "/img/" + p.generic_string();
}

// Opaque client-facing task id: FNV-1a 64 of the internal id.
inline std::string client_task_id(const std::string& task_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : task_id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "t%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Task payload for clients. Decoy status and ground truth are withheld.
inline nlohmann::ordered_json task_payload(const AnnotationTask& t) {
  nlohmann::ordered_json j;
  j["task_id"] = client_task_id(t.task_id);
  j["mode"] = mode_name(t.mode);
  j["reconstructed_url"] = image_url(t.reconstructed_ref);
  if (t.mode == TaskMode::kPair && t.original_ref) j["original_url"] = image_url(*t.original_ref);
  if (t.mode == TaskMode::kClassList) j["candidates"] = t.candidate_classes;
  return j;
}

// JSON API over an AnnotationStore:
//   GET  /api/task?annotator=ID       200 task | 204 none remaining
//   POST /api/label                   200 {"accepted":true,"quorum":n} | 409 | 422
//   GET  /api/progress                200 {"total","frozen","per_annotator"}
//   GET  /api/score?model=ID          200 HumanScore | 409 incomplete
//   GET  /img/<ref>.png               read-only images from the benchmark dir
class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, std::filesystem::path image_root)
      : store_(store), image_root_(std::move(image_root)) {
    routes();
  }

  // Optional static frontend served at "/".
  bool mount_static(const std::filesystem::path& dir) { return server_.set_mount_point("/", dir.string()); }

  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Binds an ephemeral port; call listen_after_bind() afterwards.
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  bool is_running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) {
    send_json(res, http_status(e.code()), {{"error", e.what()}, {"code", std::string(to_string(e.code()))}});
  }

  template <typename Handler>
  static auto guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const nlohmann::json::exception& e) {
        send_json(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  }

  void routes() {
    server_.Get("/api/task", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("annotator")) {
        send_json(res, 400, {{"error", "missing annotator parameter"}});
        return;
      }
      const auto task = store_.next_task(req.get_param_value("annotator"));
      if (!task) {
        res.status = 204;
        return;
      }
      remember(task->task_id);
      send_json(res, 200, task_payload(*task));
    }));

    server_.Post("/api/label", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body);
      const auto record = store_.submit_label(resolve(body.at("task_id").get<std::string>()),
                                              body.at("annotator").get<std::string>(),
                                              body.at("response").get<std::string>());
      send_json(res, 200, {{"accepted", true}, {"quorum", record.labels.size()}});
    }));

    server_.Get("/api/progress", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto p = store_.progress();
      nlohmann::ordered_json per = nlohmann::ordered_json::object();
      for (const auto& [a, n] : p.per_annotator) {
        nlohmann::ordered_json entry = {{"responses", n}};
        const auto acc = store_.decoy_accuracy(a);
        entry["decoy_accuracy"] = acc ? nlohmann::ordered_json(*acc) : nlohmann::ordered_json(nullptr);
        per[a] = entry;
      }
      send_json(res, 200, {{"total", p.total}, {"frozen", p.frozen}, {"per_annotator", per}});
    }));

    server_.Get("/api/score", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("model")) {
        send_json(res, 400, {{"error", "missing model parameter"}});
        return;
      }
      const auto s = store_.human_leakage_score(req.get_param_value("model"));
      send_json(res, 200, {{"model_id", s.model_id},
                           {"n_items", s.n_items},
                           {"recognizable_fraction", s.recognizable_fraction},
                           {"raw_response_mean", s.raw_response_mean}});
    }));

    server_.Get(R"(/img/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string rel = req.matches[1];
      if (rel.find("..") != std::string::npos) {
        send_json(res, 400, {{"error", "invalid image path"}});
        return;
      }
      auto stem = image_root_ / rel;
      stem.replace_extension();
      std::filesystem::path path;
      try {
        path = find_image_file(stem);
      } catch (const Error&) {
        send_json(res, 404, {{"error", "no image " + rel}});
        return;
      }
      const std::string bytes =
          path.extension() == ".png" ? detail::read_file(path) : encode_png(load_image(path));
      res.set_content(bytes, "image/png");
    }));
  }

  void remember(const std::string& task_id) {
    std::lock_guard lock(ids_mutex_);
    ids_.emplace(client_task_id(task_id), task_id);
  }

  // Unknown tokens trigger one rebuild from the store (e.g. after a restart).
  std::string resolve(const std::string& token) {
    std::lock_guard lock(ids_mutex_);
    auto it = ids_.find(token);
    if (it == ids_.end()) {
      for (const auto& t : store_.tasks()) ids_.emplace(client_task_id(t.task_id), t.task_id);
      it = ids_.find(token);
    }
    if (it == ids_.end()) fail(ErrorCode::kNotFound, "unknown task " + token);
    return it->second;
  }

  AnnotationStore& store_;
  std::filesystem::path image_root_;
  std::mutex ids_mutex_;
  std::map<std::string, std::string> ids_;
  httplib::Server server_;
};

}  // namespace privleak
