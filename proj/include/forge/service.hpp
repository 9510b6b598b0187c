#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

// Eigen must precede httplib: <resolv.h> defines a macro that collides
// with Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "forge/camera.hpp"
#include "forge/error.hpp"
#include "forge/image_io.hpp"
#include "forge/pipeline.hpp"
#include "forge/raster.hpp"

namespace forge {

struct ServiceConfig {
  std::filesystem::path root;                   // one subdirectory per project, each with project.json
  std::optional<std::filesystem::path> ui_dir;  // static UI bundle served at /
  std::string backend_override;                 // inpaint backend for runs when the request names none
};

// Raised when a project is mutated while a run owns it.
class BusyError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

struct RunStatus {
  std::string id;
  std::string stage;
  std::string state = "queued";  // queued | running | done | failed
  int step = 0;
  int total = 0;
  std::string error;

  nlohmann::json to_json() const {
    nlohmann::json j{{"id", id}, {"stage", stage}, {"state", state}, {"progress", {{"t", step}, {"n", total}}}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

// Free-pose view used by the UI's 3D picking pane.
struct ViewSpec {
  Intrinsics intrinsics;
  Pose pose;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Project-scoped API over the library. Every handler is a thin wrapper:
// it resolves inputs, calls the module function, and serializes the result.
class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    if (!std::filesystem::is_directory(cfg_.root))
      throw IoError("project root is not a readable directory: " + cfg_.root.string());
  }

  ~Service() { join_workers(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  std::vector<std::string> project_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(cfg_.root))
      if (e.is_directory() && std::filesystem::exists(e.path() / "project.json"))
        ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  void join_workers() {
    std::vector<std::thread> workers;
    {
      std::lock_guard lk(workers_mu_);
      workers.swap(workers_);
    }
    for (auto& w : workers)
      if (w.joinable()) w.join();
  }

  void mount(httplib::Server& s) {
    if (cfg_.ui_dir && std::filesystem::is_directory(*cfg_.ui_dir)) s.set_mount_point("/", cfg_.ui_dir->string());
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const NotFound& e) {
        reply_error(res, 404, e.what());
      } catch (const BusyError& e) {
        reply_error(res, 409, e.what());
      } catch (const InvalidArgument& e) {
        reply_error(res, 400, e.what());
      } catch (const nlohmann::json::exception& e) {
        reply_error(res, 400, e.what());
      } catch (const IoError& e) {
        reply_error(res, 404, e.what());
      } catch (const std::exception& e) {
        reply_error(res, 500, e.what());
      }
    });

    s.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { reply_json(res, {{"status", "ok"}}); });
    s.Get("/api/projects", [this](const httplib::Request&, httplib::Response& res) { reply_json(res, project_ids()); });

    s.Get(R"(/api/projects/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      reply_json(res, slot->project.doc);
    });
    s.Put(R"(/api/projects/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      const auto doc = nlohmann::json::parse(req.body);
      const auto file = slot->project.file;
      const auto old = slot->project.doc;
      write_json_file(file, doc);
      try {
        slot->project = Project::load(file);
      } catch (...) {
        write_json_file(file, old);
        throw;
      }
      slot->texture.reset();
      reply_json(res, slot->project.doc);
    });

    s.Get(R"(/api/projects/([^/]+)/cameras)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      nlohmann::json out = nlohmann::json::array();
      for (const auto* list : {&slot->project.rigs, &slot->project.heldout})
        for (const auto& e : *list) out.push_back(camera_json(e, list == &slot->project.rigs));
      reply_json(res, out);
    });
    s.Get(R"(/api/projects/([^/]+)/cameras/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      const RigEntry& e = rig(*slot, req.matches[2]);
      reply_json(res, camera_json(e, is_paint_rig(*slot, e)));
    });
    s.Put(R"(/api/projects/([^/]+)/cameras/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      RigEntry& e = rig(*slot, req.matches[2]);
      const RigDescriptor d = RigDescriptor::from_json(nlohmann::json::parse(req.body));
      if (d.id != e.rig.id) throw InvalidArgument("descriptor id does not match the camera path");
      const auto& hf = slot->project.terrain.heightfield;
      CameraRig r = resolve_rig(d, GeoPoint{hf.origin.lat_deg, hf.origin.lon_deg, 0.0},
                                [&hf](double x, double y) { return hf.surface_height(x, y); });
      r.correspondences = std::move(e.rig.correspondences);
      e.descriptor = d;
      e.rig = std::move(r);
      save_rig(e);
      reply_json(res, camera_json(e, is_paint_rig(*slot, e)));
    });
    s.Get(R"(/api/projects/([^/]+)/cameras/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      const auto bytes = read_file_bytes(rig(*slot, req.matches[2]).image_path);
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });

    s.Get(R"(/api/projects/([^/]+)/render)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      const ViewSpec view = view_from_query(*slot, req);
      const std::string mode = req.has_param("mode") ? req.get_param_value("mode") : "rgb";
      const Project& p = slot->project;
      if (mode == "rgb") {
        const PaintedTexture tex = texture(*slot);
        const RenderBuffers buf = render(p.terrain.mesh, p.terrain.uv, tex, view.intrinsics, view.pose, p.render);
        reply_png(res, encode_png(buf.rgb));
      } else if (mode == "depth") {
        const RenderBuffers buf = render_geometry(p.terrain.mesh, view.intrinsics, view.pose, p.render);
        const Depth16 d = encode_depth16(buf.depth);
        res.set_header("X-Depth-Min-M", format_double(d.min_m));
        res.set_header("X-Depth-Max-M", format_double(d.max_m));
        reply_png(res, encode_png(d.image));
      } else if (mode == "faceidx") {
        const RenderBuffers buf = render_geometry(p.terrain.mesh, view.intrinsics, view.pose, p.render);
        reply_png(res, encode_png(encode_face_index(buf.face_index)));
      } else {
        throw InvalidArgument("mode must be rgb, depth or faceidx");
      }
    });

    s.Post(R"(/api/projects/([^/]+)/pick3d)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      const auto body = nlohmann::json::parse(req.body);
      const ViewSpec view = view_from_json(*slot, body);
      const Project& p = slot->project;
      const RenderBuffers buf = render_geometry(p.terrain.mesh, view.intrinsics, view.pose, p.render);
      const auto hit = unproject_pixel(buf, p.terrain.mesh, view.intrinsics, view.pose, body.at("u").get<double>(),
                                       body.at("v").get<double>());
      if (!hit) throw NotFound("no terrain at this pixel");
      reply_json(res, {{"x", hit->x()}, {"y", hit->y()}, {"z", hit->z()}});
    });

    const std::string corr = R"(/api/projects/([^/]+)/cameras/([^/]+)/correspondences)";
    s.Get(corr, [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::shared_lock lk(slot->mu);
      const auto& list = rig(*slot, req.matches[2]).rig.correspondences;
      nlohmann::json out = nlohmann::json::array();
      for (std::size_t i = 0; i < list.size(); ++i) out.push_back(correspondence_json(list[i], i));
      reply_json(res, out);
    });
    s.Post(corr, [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      RigEntry& e = rig(*slot, req.matches[2]);
      const Correspondence c = correspondence_from_json(nlohmann::json::parse(req.body), e.rig.intrinsics);
      e.rig.correspondences.push_back(c);
      save_rig(e);
      res.status = 201;
      reply_json(res, correspondence_json(c, e.rig.correspondences.size() - 1));
    });
    s.Delete(corr, [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      RigEntry& e = rig(*slot, req.matches[2]);
      e.rig.correspondences.clear();
      save_rig(e);
      res.status = 204;
    });
    s.Put(corr + R"(/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      RigEntry& e = rig(*slot, req.matches[2]);
      const std::size_t i = index(e, req.matches[3]);
      e.rig.correspondences[i] = correspondence_from_json(nlohmann::json::parse(req.body), e.rig.intrinsics);
      save_rig(e);
      reply_json(res, correspondence_json(e.rig.correspondences[i], i));
    });
    s.Delete(corr + R"(/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      RigEntry& e = rig(*slot, req.matches[2]);
      const std::size_t i = index(e, req.matches[3]);
      e.rig.correspondences.erase(e.rig.correspondences.begin() + static_cast<std::ptrdiff_t>(i));
      save_rig(e);
      res.status = 204;
    });

    s.Post(R"(/api/projects/([^/]+)/cameras/([^/]+)/optimize)", [this](const httplib::Request& req,
                                                                      httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::unique_lock lk(slot->mu);
      ensure_idle(*slot);
      RigEntry& e = rig(*slot, req.matches[2]);
      const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
      OptimizeConfig cfg;
      if (body.contains("free_params")) {
        cfg.free_params.clear();
        for (const auto& s : body["free_params"]) cfg.free_params.push_back(camera_param_from_string(s.get<std::string>()));
      }
      if (body.contains("iters")) cfg.iterations = body["iters"].get<int>();
      const OptimizeResult r = optimize_camera(e.rig, cfg);
      apply_optimization(e, r);
      save_rig(e);
      reply_json(res, optimize_json(e.rig, r));
    });

    s.Post(R"(/api/projects/([^/]+)/runs)", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      const auto body = nlohmann::json::parse(req.body);
      const std::string stage = body.at("stage").get<std::string>();
      if (stage != "paint" && stage != "inpaint") throw InvalidArgument("stage must be paint or inpaint");
      const std::string backend = body.value("backend", cfg_.backend_override);
      const bool resume = body.value("resume", false);
      std::shared_ptr<RunStatus> run;
      Project snapshot;
      {
        std::unique_lock lk(slot->mu);
        ensure_idle(*slot);
        snapshot = slot->project;
        run = std::make_shared<RunStatus>();
        run->id = "run-" + std::to_string(++slot->run_counter);
        run->stage = stage;
        slot->runs[run->id] = run;
        slot->active = true;
      }
      std::lock_guard wl(workers_mu_);
      workers_.emplace_back([this, slot, run, stage, backend, resume, p = std::move(snapshot)]() {
        execute_run(*slot, *run, p, stage, backend, resume);
      });
      res.status = 202;
      reply_json(res, status_of(*slot, *run));
    });
    s.Get(R"(/api/projects/([^/]+)/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto slot = get_slot(req.matches[1]);
      std::lock_guard lk(slot->run_mu);
      const auto it = slot->runs.find(req.matches[2]);
      if (it == slot->runs.end()) throw NotFound("unknown run '" + std::string(req.matches[2]) + "'");
      reply_json(res, it->second->to_json());
    });
  }

  // Serialized optimize response; exposed so callers can reproduce it.
  static nlohmann::json optimize_json(const CameraRig& rig, const OptimizeResult& r) {
    nlohmann::json residuals = nlohmann::json::array();
    for (std::size_t i = 0; i < r.residuals.size(); ++i) {
      const auto& res = r.residuals[i];
      const Vec3& x = rig.correspondences[i].point;
      nlohmann::json item{{"x", x.x()}, {"y", x.y()}, {"z", x.z()}, {"u", res.target.x()}, {"v", res.target.y()},
                          {"l1", res.l1}};
      if (std::isfinite(res.projected.x())) {
        item["pu"] = res.projected.x();
        item["pv"] = res.projected.y();
      } else {
        item["pu"] = nullptr;
        item["pv"] = nullptr;
      }
      residuals.push_back(item);
    }
    return {{"fx", r.intrinsics.fx},
            {"fy", r.intrinsics.fy},
            {"yaw_deg", rad2deg(r.pose.yaw)},
            {"pitch_deg", rad2deg(r.pose.pitch)},
            {"initial_loss", r.initial_loss},
            {"loss", r.loss},
            {"residuals", residuals},
            {"loss_trace", r.loss_trace},
            {"warnings", r.warnings}};
  }

 private:
  struct Slot {
    std::shared_mutex mu;  // project state
    Project project;
    std::optional<PaintedTexture> texture;  // last checkpointed texture
    std::mutex run_mu;                      // runs, texture
    std::map<std::string, std::shared_ptr<RunStatus>> runs;
    int run_counter = 0;
    std::atomic<bool> active{false};
  };

  static void reply_json(httplib::Response& res, const nlohmann::json& j) {
    res.set_content(j.dump(), "application/json");
  }
  static void reply_png(httplib::Response& res, const std::vector<std::uint8_t>& bytes) {
    res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
  }
  static void reply_error(httplib::Response& res, int status, const std::string& msg) {
    res.status = status;
    reply_json(res, {{"error", msg}});
  }

  std::shared_ptr<Slot> get_slot(const std::string& id) {
    if (id.empty() || id.find("..") != std::string::npos || id.find('/') != std::string::npos)
      throw NotFound("unknown project '" + id + "'");
    std::lock_guard lk(slots_mu_);
    auto it = slots_.find(id);
    if (it != slots_.end()) return it->second;
    const auto file = cfg_.root / id / "project.json";
    if (!std::filesystem::exists(file)) throw NotFound("unknown project '" + id + "'");
    auto slot = std::make_shared<Slot>();
    slot->project = Project::load(file);
    slots_.emplace(id, slot);
    return slot;
  }

  static void ensure_idle(const Slot& s) {
    if (s.active) throw BusyError("project is busy with a run");
  }

  static RigEntry& rig(Slot& s, const std::string& id) {
    RigEntry* e = s.project.find_rig(id);
    if (!e) throw NotFound("unknown camera '" + id + "'");
    return *e;
  }

  static bool is_paint_rig(const Slot& s, const RigEntry& e) {
    return std::any_of(s.project.rigs.begin(), s.project.rigs.end(), [&](const RigEntry& r) { return &r == &e; });
  }

  static std::size_t index(const RigEntry& e, const std::string& s) {
    const std::size_t i = std::stoul(s);
    if (i >= e.rig.correspondences.size()) throw NotFound("no correspondence " + s);
    return i;
  }

  static nlohmann::json camera_json(const RigEntry& e, bool paint) {
    nlohmann::json j = e.descriptor.to_json();
    j["role"] = paint ? "paint" : "heldout";
    j["position"] = {e.rig.pose.position.x(), e.rig.pose.position.y(), e.rig.pose.position.z()};
    j["correspondence_count"] = e.rig.correspondences.size();
    return j;
  }

  static nlohmann::json correspondence_json(const Correspondence& c, std::size_t i) {
    return {{"index", i}, {"x", c.point.x()}, {"y", c.point.y()}, {"z", c.point.z()}, {"u", c.target.x()},
            {"v", c.target.y()}};
  }

  static Correspondence correspondence_from_json(const nlohmann::json& j, const Intrinsics& k) {
    Correspondence c{{j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()},
                     {j.at("u").get<double>(), j.at("v").get<double>()}};
    validate_correspondences({c}, k);
    return c;
  }

  PaintedTexture texture(Slot& s) {
    std::lock_guard lk(s.run_mu);
    if (!s.texture) s.texture = latest_texture(s.project);
    return *s.texture;
  }

  static ViewSpec view_from_query(Slot& s, const httplib::Request& req) {
    nlohmann::json j = nlohmann::json::object();
    for (const char* key : {"cam", "pose", "w", "h", "hfov_deg"})
      if (req.has_param(key)) j[key] = req.get_param_value(key);
    return view_from_json(s, j);
  }

  static double number(const nlohmann::json& v) {
    return v.is_string() ? std::stod(v.get<std::string>()) : v.get<double>();
  }

  // {cam, w?, h?} or {pose: "yaw,pitch,x,y,z" | {yaw_deg, pitch_deg, x, y, z}, w?, h?, hfov_deg?}
  static ViewSpec view_from_json(Slot& s, const nlohmann::json& j) {
    ViewSpec v;
    const int w = j.contains("w") ? static_cast<int>(number(j["w"])) : 0;
    const int h = j.contains("h") ? static_cast<int>(number(j["h"])) : 0;
    if (j.contains("cam")) {
      const RigEntry& e = rig(s, j["cam"].get<std::string>());
      v.pose = e.rig.pose;
      v.intrinsics = (w > 0 && h > 0) ? e.rig.intrinsics.scaled_to(w, h) : e.rig.intrinsics;
      return v;
    }
    if (!j.contains("pose")) throw InvalidArgument("a view needs cam or pose");
    std::vector<double> f;
    const auto& p = j["pose"];
    if (p.is_string()) {
      std::stringstream ss(p.get<std::string>());
      std::string tok;
      while (std::getline(ss, tok, ',')) f.push_back(std::stod(tok));
    } else {
      f = {p.at("yaw_deg").get<double>(), p.at("pitch_deg").get<double>(), p.at("x").get<double>(),
           p.at("y").get<double>(), p.at("z").get<double>()};
    }
    if (f.size() != 5) throw InvalidArgument("pose must be yaw,pitch,x,y,z");
    v.pose.yaw = deg2rad(f[0]);
    v.pose.pitch = deg2rad(f[1]);
    v.pose.position = {f[2], f[3], f[4]};
    v.pose.validate();
    const double hfov = j.contains("hfov_deg") ? number(j["hfov_deg"]) : 60.0;
    v.intrinsics = Intrinsics::from_hfov(deg2rad(hfov), w > 0 ? w : 512, h > 0 ? h : 384);
    return v;
  }

  nlohmann::json status_of(Slot& s, const RunStatus& r) {
    std::lock_guard lk(s.run_mu);
    return r.to_json();
  }

  void execute_run(Slot& s, RunStatus& run, const Project& p, const std::string& stage, const std::string& backend,
                   bool resume) {
    const auto progress = [&](int t, int n, const PaintedTexture& tex) {
      std::lock_guard lk(s.run_mu);
      run.step = t;
      run.total = n;
      s.texture = tex;
    };
    {
      std::lock_guard lk(s.run_mu);
      run.state = "running";
      run.total = stage == "paint" ? static_cast<int>(p.rigs.size()) : (p.trajectory ? p.trajectory->config.samples : 0);
    }
    try {
      if (stage == "paint") {
        run_paint_stage(p, progress);
      } else {
        auto b = make_backend(p.inpaint, backend);
        InpaintRunOptions opts;
        opts.resume = resume;
        opts.progress = progress;
        const auto r = run_inpaint_stage(p, *b, opts);
        std::lock_guard lk(s.run_mu);
        s.texture = r.texture;
      }
      std::lock_guard lk(s.run_mu);
      run.state = "done";
    } catch (const std::exception& e) {
      spdlog::error("run {} failed: {}", run.id, e.what());
      std::lock_guard lk(s.run_mu);
      run.state = "failed";
      run.error = e.what();
    }
    s.active = false;
  }

  ServiceConfig cfg_;
  std::mutex slots_mu_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

// Run the API until the server is stopped.
inline void serve(const ServiceConfig& cfg, const std::string& host, int port) {
  Service service(cfg);
  httplib::Server server;
  service.mount(server);
  // httplib's default also sets SO_REUSEPORT, which would let a second
  // server share a busy port instead of failing.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (!server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("serving {} on http://{}:{}", cfg.root.string(), host, port);
  server.listen_after_bind();
  service.join_workers();
}

}  // namespace forge
