#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

// Eigen must precede httplib: <resolv.h> defines a macro that collides
// with Eigen parameter names.
#include <Eigen/Dense>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/image_io.hpp"
#include "forge/inpaint.hpp"

// Inpaint wire protocol.
//
//   POST /v1/inpaint   multipart/form-data
//     meta   JSON {seed, prompt, ip_image_id?, strength, depth_min_m, depth_max_m}
//     rgb    8-bit RGB PNG
//     mask   8-bit grayscale PNG, 255 = inpaint
//     depth  16-bit grayscale PNG, normalized inverse depth
//   -> 200 multipart/form-data
//     meta   JSON {backend_id, elapsed_ms, degenerate?, warnings?}
//     rgb    8-bit RGB PNG
//   GET /v1/health -> {status, backend_id}

namespace forge::protocol {

struct Part {
  std::string name;
  std::string filename;
  std::string content_type;
  std::string data;
};

inline constexpr std::string_view kBoundaryBase = "forge-inpaint-7c1e9a3f";

inline std::string choose_boundary(const std::vector<Part>& parts) {
  std::string b(kBoundaryBase);
  for (int n = 0;; ++n) {
    const std::string cand = n == 0 ? b : b + "-" + std::to_string(n);
    bool clash = false;
    for (const auto& p : parts) clash = clash || p.data.find(cand) != std::string::npos;
    if (!clash) return cand;
  }
}

inline std::string encode_multipart(const std::vector<Part>& parts, const std::string& boundary) {
  std::string out;
  for (const auto& p : parts) {
    out += "--" + boundary + "\r\n";
    out += "Content-Disposition: form-data; name=\"" + p.name + "\"";
    if (!p.filename.empty()) out += "; filename=\"" + p.filename + "\"";
    out += "\r\n";
    if (!p.content_type.empty()) out += "Content-Type: " + p.content_type + "\r\n";
    out += "\r\n";
    out += p.data;
    out += "\r\n";
  }
  out += "--" + boundary + "--\r\n";
  return out;
}

inline std::string multipart_content_type(const std::string& boundary) {
  return "multipart/form-data; boundary=" + boundary;
}

namespace detail {

inline std::string header_param(std::string_view header, std::string_view key) {
  const std::string pat = std::string(key) + "=";
  auto pos = header.find(pat);
  if (pos == std::string_view::npos) return {};
  pos += pat.size();
  if (pos < header.size() && header[pos] == '"') {
    const auto end = header.find('"', pos + 1);
    return std::string(header.substr(pos + 1, end - pos - 1));
  }
  const auto end = header.find_first_of("; \r\n", pos);
  return std::string(header.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
}

inline std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

inline std::vector<Part> decode_multipart(std::string_view body, std::string_view content_type) {
  const std::string boundary = detail::header_param(content_type, "boundary");
  if (boundary.empty()) throw BackendError("multipart: missing boundary");
  const std::string delim = "--" + boundary;
  std::vector<Part> parts;
  std::size_t pos = body.find(delim);
  if (pos == std::string_view::npos) throw BackendError("multipart: boundary not found");
  while (true) {
    pos += delim.size();
    if (body.substr(pos, 2) == "--") break;
    if (body.substr(pos, 2) != "\r\n") throw BackendError("multipart: malformed delimiter line");
    pos += 2;
    const auto header_end = body.find("\r\n\r\n", pos);
    if (header_end == std::string_view::npos) throw BackendError("multipart: unterminated part headers");
    Part part;
    std::string_view headers = body.substr(pos, header_end - pos);
    std::size_t hp = 0;
    while (hp <= headers.size()) {
      auto eol = headers.find("\r\n", hp);
      if (eol == std::string_view::npos) eol = headers.size();
      const std::string_view line = headers.substr(hp, eol - hp);
      const auto colon = line.find(':');
      if (colon != std::string_view::npos) {
        const std::string key = detail::to_lower(std::string(line.substr(0, colon)));
        std::string_view value = line.substr(colon + 1);
        while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
        if (key == "content-disposition") {
          part.name = detail::header_param(value, "name");
          part.filename = detail::header_param(value, "filename");
        } else if (key == "content-type") {
          part.content_type = std::string(value);
        }
      }
      hp = eol + 2;
    }
    const std::size_t data_begin = header_end + 4;
    const auto next = body.find("\r\n" + delim, data_begin);
    if (next == std::string_view::npos) throw BackendError("multipart: unterminated part body");
    part.data = std::string(body.substr(data_begin, next - data_begin));
    parts.push_back(std::move(part));
    pos = next + 2;
  }
  return parts;
}

inline const Part& find_part(const std::vector<Part>& parts, std::string_view name) {
  for (const auto& p : parts)
    if (p.name == name) return p;
  throw BackendError("multipart: missing part '" + std::string(name) + "'");
}

inline std::vector<std::uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }
inline std::string as_string(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

struct Encoded {
  std::string body;
  std::string content_type;
};

inline std::vector<Part> request_parts(const InpaintRequest& req) {
  nlohmann::json meta{{"seed", req.seed},
                      {"prompt", req.guidance.prompt},
                      {"strength", req.guidance.strength},
                      {"depth_min_m", req.depth.min_m},
                      {"depth_max_m", req.depth.max_m}};
  if (req.guidance.ip_image_id) meta["ip_image_id"] = *req.guidance.ip_image_id;
  GrayImage mask(req.mask.width(), req.mask.height(), 1);
  for (std::size_t i = 0; i < mask.pixel_count(); ++i) mask.data()[i] = req.mask.data()[i] ? 255 : 0;
  return {{"meta", "", "application/json", meta.dump()},
          {"rgb", "rgb.png", "image/png", as_string(encode_png(req.rgb))},
          {"mask", "mask.png", "image/png", as_string(encode_png(mask))},
          {"depth", "depth.png", "image/png", as_string(encode_png(req.depth.image))}};
}

inline Encoded encode_request(const InpaintRequest& req) {
  const auto parts = request_parts(req);
  const auto boundary = choose_boundary(parts);
  return {encode_multipart(parts, boundary), multipart_content_type(boundary)};
}

inline InpaintRequest request_from_parts(const std::vector<Part>& parts) {
  InpaintRequest req;
  try {
    const auto meta = nlohmann::json::parse(find_part(parts, "meta").data);
    req.seed = meta.at("seed").get<std::uint64_t>();
    req.guidance.prompt = meta.value("prompt", std::string{});
    req.guidance.strength = meta.value("strength", 1.0);
    if (meta.contains("ip_image_id") && !meta["ip_image_id"].is_null())
      req.guidance.ip_image_id = meta["ip_image_id"].get<std::string>();
    req.depth.min_m = meta.at("depth_min_m").get<double>();
    req.depth.max_m = meta.at("depth_max_m").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("inpaint request meta: " + std::string(e.what()));
  }
  req.rgb = decode_rgb8(as_bytes(find_part(parts, "rgb").data));
  req.mask = decode_gray8(as_bytes(find_part(parts, "mask").data));
  for (auto& v : req.mask.data()) v = v >= 128 ? 1 : 0;
  req.depth.image = decode_gray16(as_bytes(find_part(parts, "depth").data));
  req.validate();
  return req;
}

inline InpaintRequest decode_request(std::string_view body, std::string_view content_type) {
  return request_from_parts(decode_multipart(body, content_type));
}

inline Encoded encode_response(const InpaintResponse& resp) {
  nlohmann::json meta{{"backend_id", resp.backend_id}, {"elapsed_ms", resp.elapsed_ms}};
  if (resp.degenerate) meta["degenerate"] = true;
  if (!resp.warnings.empty()) meta["warnings"] = resp.warnings;
  std::vector<Part> parts{{"meta", "", "application/json", meta.dump()},
                          {"rgb", "rgb.png", "image/png", as_string(encode_png(resp.rgb))}};
  const auto boundary = choose_boundary(parts);
  return {encode_multipart(parts, boundary), multipart_content_type(boundary)};
}

inline InpaintResponse decode_response(std::string_view body, std::string_view content_type) {
  const auto parts = decode_multipart(body, content_type);
  InpaintResponse resp;
  try {
    const auto meta = nlohmann::json::parse(find_part(parts, "meta").data);
    resp.backend_id = meta.at("backend_id").get<std::string>();
    resp.elapsed_ms = meta.value("elapsed_ms", 0.0);
    resp.degenerate = meta.value("degenerate", false);
    if (meta.contains("warnings")) resp.warnings = meta["warnings"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("inpaint response meta: " + std::string(e.what()));
  }
  resp.rgb = decode_rgb8(as_bytes(find_part(parts, "rgb").data));
  return resp;
}

// Serve `backend` over the wire protocol on `server`.
inline void mount_backend(httplib::Server& server, InpaintBackend& backend) {
  server.Get("/v1/health", [&backend](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"status", "ok"}, {"backend_id", backend.id()}}.dump(), "application/json");
  });
  server.Post("/v1/inpaint", [&backend](const httplib::Request& req, httplib::Response& res) {
    try {
      std::vector<Part> parts;
      if (!req.files.empty()) {
        for (const auto& [name, f] : req.files) parts.push_back({f.name, f.filename, f.content_type, f.content});
      } else {
        parts = decode_multipart(req.body, req.get_header_value("Content-Type"));
      }
      const InpaintRequest ir = request_from_parts(parts);
      const auto t0 = std::chrono::steady_clock::now();
      InpaintResponse out = backend.inpaint(ir);
      if (out.elapsed_ms == 0.0 && backend.id() != kMockBackendId)
        out.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const auto enc = encode_response(out);
      res.set_content(enc.body, enc.content_type);
    } catch (const InvalidArgument& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const IoError& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

}  // namespace forge::protocol

namespace forge {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double backoff_multiplier = 2.0;
  std::chrono::seconds timeout{300};
};

// Client for a backend speaking the wire protocol at `endpoint`
// ("http://host:port"). Transport failures and 5xx replies are retried with
// exponential backoff; the returned image is composited against the request.
class RemoteBackend final : public InpaintBackend {
 public:
  explicit RemoteBackend(std::string endpoint, RetryPolicy policy = {})
      : endpoint_(std::move(endpoint)), policy_(policy) {}

  InpaintResponse inpaint(const InpaintRequest& req) override {
    req.validate(true);
    const auto enc = protocol::encode_request(req);
    std::string last_error = "no attempt made";
    auto backoff = policy_.initial_backoff;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
      httplib::Client cli(endpoint_);
      cli.set_connection_timeout(policy_.timeout);
      cli.set_read_timeout(policy_.timeout);
      cli.set_write_timeout(policy_.timeout);
      auto res = cli.Post("/v1/inpaint", enc.body, enc.content_type);
      if (res && res->status == 200) {
        InpaintResponse out = protocol::decode_response(res->body, res->get_header_value("Content-Type"));
        out = composite(req, std::move(out));
        for (const auto& w : out.warnings) spdlog::warn("inpaint backend {}: {}", endpoint_, w);
        return out;
      }
      if (res && res->status < 500) throw BackendError("inpaint backend rejected request: " + res->body);
      last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (attempt < policy_.max_attempts) {
        spdlog::warn("inpaint backend {} attempt {} failed ({}); retrying", endpoint_, attempt, last_error);
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(static_cast<long>(backoff.count() * policy_.backoff_multiplier));
      }
    }
    throw BackendError("inpaint backend " + endpoint_ + " failed after " + std::to_string(policy_.max_attempts) +
                       " attempts: " + last_error);
  }

  std::string id() const override { return "remote:" + endpoint_; }

  // GET /v1/health; returns the reported backend id.
  std::string health() const {
    httplib::Client cli(endpoint_);
    cli.set_connection_timeout(policy_.timeout);
    auto res = cli.Get("/v1/health");
    if (!res || res->status != 200) throw BackendError("inpaint backend health check failed");
    return nlohmann::json::parse(res->body).at("backend_id").get<std::string>();
  }

 private:
  std::string endpoint_;
  RetryPolicy policy_;
};

inline InpaintResponse remote_inpaint(const std::string& endpoint, const InpaintRequest& req,
                                      const RetryPolicy& policy = {}) {
  RemoteBackend backend(endpoint, policy);
  return backend.inpaint(req);
}

}  // namespace forge
