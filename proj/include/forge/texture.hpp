#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "forge/error.hpp"
#include "forge/image.hpp"

namespace forge {

// Reserved color for "no geometry" and, on request, "not painted yet".
inline constexpr Rgb kSentinel{255, 0, 255};

inline constexpr std::uint8_t kUnpainted = 0;
inline constexpr std::uint8_t kPainted = 1;

// UV texture with its paint mask and per-texel provenance.
//
// `color` is meaningful only where mask == kPainted; `base` holds the baked
// satellite color used as the display fallback. `source` indexes `labels`;
// label 0 is always "base".
struct PaintedTexture {
  RgbImage color;
  GrayImage mask;
  RgbImage base;
  Image<std::uint16_t> source;
  std::vector<std::string> labels{"base"};

  PaintedTexture() = default;
  PaintedTexture(RgbImage base_color)
      : color(base_color),
        mask(base_color.width(), base_color.height(), 1, kUnpainted),
        base(std::move(base_color)),
        source(base.width(), base.height(), 1, 0) {}

  int width() const { return color.width(); }
  int height() const { return color.height(); }
  bool painted(int x, int y) const { return mask.at(x, y) == kPainted; }

  // Returns the color shown for texel (x, y): paint where present, else base.
  Rgb display(int x, int y) const { return painted(x, y) ? get_rgb(color, x, y) : get_rgb(base, x, y); }

  std::uint16_t label_index(std::string_view label) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return static_cast<std::uint16_t>(i);
    if (labels.size() >= 0xFFFF) throw InvalidArgument("too many provenance labels");
    labels.emplace_back(label);
    return static_cast<std::uint16_t>(labels.size() - 1);
  }

  std::size_t painted_count() const {
    std::size_t n = 0;
    for (auto m : mask.data()) n += (m == kPainted);
    return n;
  }

  void validate() const {
    if (color.channels() != 3 || base.channels() != 3 || mask.channels() != 1)
      throw InvalidArgument("PaintedTexture: bad channel layout");
    if (!color.same_size(mask) || !color.same_size(base) || !color.same_size(source))
      throw InvalidArgument("PaintedTexture: mask and color dimensions differ");
    for (int y = 0; y < height(); ++y)
      for (int x = 0; x < width(); ++x)
        if (painted(x, y) && get_rgb(color, x, y) == kSentinel)
          throw InvalidArgument("PaintedTexture: sentinel stored at a painted texel");
  }

  bool operator==(const PaintedTexture&) const = default;
};

// Binary per-pixel mask; 1 marks uncolored pixels that need inpainting.
using ImageMask = Image<std::uint8_t>;

}  // namespace forge
