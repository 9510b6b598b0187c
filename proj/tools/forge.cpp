#include <csignal>
#include <cstdlib>
#include <iostream>

#include "forge/camera.hpp"
#include "forge/eval.hpp"
#include "forge/inpaint.hpp"
#include "forge/pipeline.hpp"
#include "forge/protocol.hpp"
#include "forge/service.hpp"
#include "forge/synth.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void listen_until_signal(httplib::Server& server, const std::string& host, int port) {
  if (!server.bind_to_port(host, port)) throw forge::IoError("cannot bind " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen_after_bind();
  g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: webcam-textured terrain and inpainted flythroughs"};
  app.require_subcommand(1);
  std::string project;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* synth = app.add_subcommand("synth", "write a synthetic project");
  std::string synth_out;
  forge::synth::Options synth_opts;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_flag("--perturb", synth_opts.perturb, "write perturbed, untrusted camera descriptors");
  synth->add_option("--seed", synth_opts.seed, "inpaint seed stored in the project");

  auto* optimize = app.add_subcommand("optimize", "fit camera intrinsics and yaw to correspondences");
  std::vector<std::string> cameras;
  std::vector<std::string> params{"fx", "fy", "yaw"};
  int iters = 200;
  optimize->add_option("--project", project, "project.json")->required();
  optimize->add_option("--camera", cameras, "camera ids (default: all paint cameras)");
  optimize->add_option("--params", params, "free parameters: fx fy yaw pitch")->delimiter(',');
  optimize->add_option("--iters", iters, "iterations");

  auto* paint = app.add_subcommand("paint", "paint webcam images into the texture atlas");
  paint->add_option("--project", project, "project.json")->required();

  auto* inpaint = app.add_subcommand("inpaint", "inpaint along the flythrough trajectory");
  std::string backend;
  bool resume = false;
  int stop_after = 0;
  inpaint->add_option("--project", project, "project.json")->required();
  inpaint->add_option("--backend", backend, "mock, url, or http://host:port");
  inpaint->add_flag("--resume", resume, "continue from the last completed step");
  inpaint->add_option("--stop-after", stop_after, "stop after this step");

  auto* exp = app.add_subcommand("export", "write the posed-image dataset manifest");
  std::string manifest;
  exp->add_option("--project", project, "project.json")->required();
  exp->add_option("--out", manifest, "manifest path (default: <output_dir>/dataset.json)");

  auto* traj = app.add_subcommand("trajectory", "print the sampled trajectory poses");
  std::string mode, orientation;
  int samples = 0;
  double agl = -1.0;
  traj->add_option("--project", project, "project.json")->required();
  traj->add_option("--mode", mode, "linear or cubic");
  traj->add_option("--samples", samples, "number of frames");
  traj->add_option("--agl", agl, "default height above ground, meters");
  traj->add_option("--orientation", orientation, "look_ahead or look_target");

  auto* eval = app.add_subcommand("eval", "score held-out webcams against renders");
  std::string report_path;
  bool write_frames = false;
  eval->add_option("--project", project, "project.json")->required();
  eval->add_option("--out", report_path, "report JSON path");
  eval->add_flag("--frames", write_frames, "write the evaluation renders");

  auto* serve = app.add_subcommand("serve", "run the project API");
  forge::ServiceConfig svc;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
  serve->add_option("--root", svc.root, "directory of projects")->required();
  serve->add_option("--port", port, "port");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--ui", ui_dir, "static UI bundle directory");
  serve->add_option("--backend", svc.backend_override, "inpaint backend for runs");

  auto* mock = app.add_subcommand("mock-backend", "serve the deterministic mock inpainting backend");
  int mock_port = 8090;
  int grain = 1;
  mock->add_option("--port", mock_port, "port");
  mock->add_option("--host", host, "bind address");
  mock->add_option("--grain", grain, "grain levels, 0 to 2");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*synth) {
      const auto scene = forge::synth::write_project(synth_out, synth_opts);
      std::cout << scene.project_file.string() << '\n';
    } else if (*optimize) {
      forge::Project p = forge::Project::load(project);
      forge::OptimizeConfig cfg;
      cfg.iterations = iters;
      cfg.free_params.clear();
      for (const auto& s : params) cfg.free_params.push_back(forge::camera_param_from_string(s));
      if (cameras.empty())
        for (const auto& e : p.rigs) cameras.push_back(e.rig.id);
      for (const auto& id : cameras) {
        forge::RigEntry* e = p.find_rig(id);
        if (!e) throw forge::InvalidArgument("unknown camera '" + id + "'");
        const auto r = forge::optimize_camera(e->rig, cfg);
        forge::apply_optimization(*e, r);
        forge::save_rig(*e);
        std::cout << id << ": loss " << r.initial_loss << " -> " << r.loss << " px, fx " << r.intrinsics.fx << ", fy "
                  << r.intrinsics.fy << ", yaw " << forge::rad2deg(r.pose.yaw) << " deg\n";
        for (const auto& w : r.warnings) spdlog::warn("{}: {}", id, w);
      }
    } else if (*paint) {
      const forge::Project p = forge::Project::load(project);
      const auto r = forge::run_paint_stage(p, [](int t, int n, const forge::PaintedTexture& tex) {
        spdlog::info("paint {}/{}: {} texels painted", t, n, tex.painted_count());
      });
      std::cout << "texture " << forge::texture_hash(r.texture) << '\n';
    } else if (*inpaint) {
      const forge::Project p = forge::Project::load(project);
      auto b = forge::make_backend(p.inpaint, backend);
      forge::InpaintRunOptions opts;
      opts.resume = resume;
      if (stop_after > 0) opts.stop_after = stop_after;
      opts.progress = [](int t, int n, const forge::PaintedTexture& tex) {
        spdlog::info("inpaint {}/{}: {} texels painted", t, n, tex.painted_count());
      };
      const auto r = forge::run_inpaint_stage(p, *b, opts);
      if (r.completed)
        std::cout << "texture " << forge::texture_hash(r.texture) << '\n';
      else
        std::cout << "stopped after step " << r.last_step << '\n';
    } else if (*exp) {
      const forge::Project p = forge::Project::load(project);
      const std::filesystem::path out = manifest.empty() ? p.output_dir / "dataset.json" : std::filesystem::path(manifest);
      const auto m = forge::export_dataset(p, forge::load_run_frames(p), out);
      std::cout << out.string() << ": " << m["frames"].size() << " frames\n";
    } else if (*traj) {
      forge::Project p = forge::Project::load(project);
      if (!p.trajectory) throw forge::InvalidArgument("project has no trajectory");
      auto& c = p.trajectory->config;
      if (!mode.empty()) c.mode = forge::trajectory_mode_from_string(mode);
      if (!orientation.empty()) c.orientation = forge::orientation_from_string(orientation);
      if (samples > 0) c.samples = samples;
      if (agl >= 0.0) c.default_agl_m = agl;
      nlohmann::json out = nlohmann::json::array();
      for (const auto& pose : p.trajectory_poses())
        out.push_back({{"position", {pose.position.x(), pose.position.y(), pose.position.z()}},
                       {"yaw_deg", forge::rad2deg(pose.yaw)},
                       {"pitch_deg", forge::rad2deg(pose.pitch)}});
      std::cout << out.dump(2) << '\n';
    } else if (*eval) {
      const forge::Project p = forge::Project::load(project);
      forge::EvalConfig cfg;
      cfg.near_cutoff_m = p.eval_near_cutoff_m;
      cfg.render = p.render;
      if (write_frames) {
        cfg.frames_dir = p.output_dir / "eval";
        std::filesystem::create_directories(*cfg.frames_dir);
      }
      const auto report =
          forge::evaluate_views(p.terrain.mesh, p.terrain.uv, forge::latest_texture(p), forge::load_heldout_views(p), cfg, p.name);
      if (!report_path.empty()) forge::write_json_file(report_path, report.to_json());
      std::cout << report.table();
    } else if (*serve) {
      if (!ui_dir.empty()) svc.ui_dir = ui_dir;
      forge::Service service(svc);
      httplib::Server server;
      service.mount(server);
      spdlog::info("serving {} on http://{}:{}", svc.root.string(), host, port);
      listen_until_signal(server, host, port);
      service.join_workers();
    } else if (*mock) {
      forge::MockBackend backend(forge::MockConfig{grain});
      httplib::Server server;
      forge::protocol::mount_backend(server, backend);
      spdlog::info("mock backend on http://{}:{}", host, mock_port);
      listen_until_signal(server, host, mock_port);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
