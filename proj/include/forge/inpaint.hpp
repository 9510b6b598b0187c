#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/image.hpp"
#include "forge/pull_push.hpp"
#include "forge/raster.hpp"
#include "forge/texture.hpp"

namespace forge {

struct Guidance {
  std::string prompt;
  std::optional<std::string> ip_image_id;  // reference webcam for image-prompt conditioning
  double strength = 1.0;

  bool operator==(const Guidance&) const = default;
};

struct InpaintRequest {
  RgbImage rgb;
  ImageMask mask;  // 1 = fill this pixel
  Depth16 depth;
  Guidance guidance;
  std::uint64_t seed = 0;

  void validate(bool require_nonempty_mask = false) const {
    if (rgb.empty() || rgb.channels() != 3) throw InvalidArgument("InpaintRequest: rgb must be a 3-channel image");
    if (!rgb.same_size(mask) || !rgb.same_size(depth.image) || mask.channels() != 1 || depth.image.channels() != 1)
      throw InvalidArgument("InpaintRequest: rgb, mask and depth dimensions differ");
    if (require_nonempty_mask &&
        std::none_of(mask.data().begin(), mask.data().end(), [](std::uint8_t v) { return v != 0; }))
      throw InvalidArgument("InpaintRequest: empty mask");
  }
};

struct InpaintResponse {
  RgbImage rgb;
  std::string backend_id;
  double elapsed_ms = 0.0;
  bool degenerate = false;  // no known pixel to inpaint from
  std::vector<std::string> warnings;
};

class InpaintBackend {
 public:
  virtual ~InpaintBackend() = default;
  virtual InpaintResponse inpaint(const InpaintRequest& req) = 0;
  virtual std::string id() const = 0;
};

// Hash of everything a backend may condition on.
inline std::string request_digest(const InpaintRequest& req) {
  Sha256 h;
  const std::int32_t dims[2] = {req.rgb.width(), req.rgb.height()};
  h.update(dims, sizeof dims);
  h.update_bytes(req.rgb.data()).update_bytes(req.mask.data()).update_bytes(req.depth.image.data());
  h.update(&req.depth.min_m, sizeof(double)).update(&req.depth.max_m, sizeof(double));
  h.update(req.guidance.prompt).update("\0", 1).update(req.guidance.ip_image_id.value_or("")).update("\0", 1);
  h.update(&req.guidance.strength, sizeof(double)).update(&req.seed, sizeof req.seed);
  return h.hex();
}

struct MockConfig {
  int grain_levels = 1;  // +/- 8-bit levels of seeded grain on filled pixels, at most 2
};

inline constexpr const char* kMockBackendId = "mock-pullpush";

// Deterministic stand-in backend: masked pixels are filled by pull-push
// from unmasked ones plus optional seeded grain; unmasked pixels are copied
// exactly. A fully masked image is filled mid-gray and flagged degenerate.
inline InpaintResponse mock_inpaint(const InpaintRequest& req, const MockConfig& cfg = {}) {
  req.validate();
  if (cfg.grain_levels < 0 || cfg.grain_levels > 2) throw InvalidArgument("mock_inpaint: grain must be 0..2 levels");
  InpaintResponse resp{req.rgb, kMockBackendId, 0.0, false, {}};
  std::vector<std::uint8_t> known(req.mask.pixel_count());
  bool any_masked = false;
  for (std::size_t i = 0; i < known.size(); ++i) {
    known[i] = req.mask.data()[i] == 0;
    any_masked = any_masked || !known[i];
  }
  if (!any_masked) return resp;

  Image<double> work(req.rgb.width(), req.rgb.height(), 3);
  for (std::size_t i = 0; i < work.data().size(); ++i) work.data()[i] = req.rgb.data()[i];
  if (!pull_push_fill(work, known)) {
    work.fill(128.0);
    resp.degenerate = true;
  }

  const std::string digest = request_digest(req);
  const std::uint64_t seed = std::stoull(digest.substr(0, 16), nullptr, 16);
  std::mt19937_64 rng(seed ^ req.seed);
  const int g = resp.degenerate ? 0 : cfg.grain_levels;
  for (std::size_t i = 0; i < known.size(); ++i) {
    if (known[i]) continue;
    for (int c = 0; c < 3; ++c) {
      const long noise = g > 0 ? static_cast<long>(rng() % static_cast<std::uint64_t>(2 * g + 1)) - g : 0;
      resp.rgb.data()[i * 3 + c] =
          static_cast<std::uint8_t>(std::clamp(std::lround(work.data()[i * 3 + c]) + noise, 0L, 255L));
    }
  }
  return resp;
}

class MockBackend final : public InpaintBackend {
 public:
  explicit MockBackend(MockConfig cfg = {}) : cfg_(cfg) {}
  InpaintResponse inpaint(const InpaintRequest& req) override { return mock_inpaint(req, cfg_); }
  std::string id() const override { return kMockBackendId; }

 private:
  MockConfig cfg_;
};

// final = mask (.) response + (1 - mask) (.) request. Adds a warning to the
// result when the backend touched pixels outside the mask.
inline InpaintResponse composite(const InpaintRequest& req, InpaintResponse resp) {
  if (!resp.rgb.same_shape(req.rgb))
    throw BackendError("inpaint response has dimensions " + std::to_string(resp.rgb.width()) + "x" +
                       std::to_string(resp.rgb.height()) + ", request has " + std::to_string(req.rgb.width()) + "x" +
                       std::to_string(req.rgb.height()));
  std::size_t altered = 0;
  for (std::size_t i = 0; i < req.mask.pixel_count(); ++i) {
    if (req.mask.data()[i]) continue;
    bool diff = false;
    for (int c = 0; c < 3; ++c) {
      auto& out = resp.rgb.data()[i * 3 + c];
      const auto in = req.rgb.data()[i * 3 + c];
      diff = diff || out != in;
      out = in;
    }
    altered += diff;
  }
  if (altered)
    resp.warnings.push_back("backend altered " + std::to_string(altered) +
                            " pixels outside the mask; restored from the request");
  return resp;
}

}  // namespace forge
