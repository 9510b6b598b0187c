#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "forge/image.hpp"

namespace forge {

// Pull-push hole filling. Samples with known[i] == 0 are replaced by a
// multi-resolution interpolation of the known ones; known samples are left
// untouched. The pull phase averages known samples into a pyramid of
// half-resolution levels; the push phase fills each level from a bilinear
// upsample of the (already filled) coarser level. Every filled value is a
// convex combination of known values.
//
// Returns false, leaving `img` unchanged, when no sample is known.
inline bool pull_push_fill(Image<double>& img, std::span<const std::uint8_t> known) {
  struct Level {
    Image<double> color;
    std::vector<double> weight;
  };
  const int channels = img.channels();
  std::vector<Level> levels;
  {
    Level l0{img, std::vector<double>(img.pixel_count())};
    bool any = false;
    for (std::size_t i = 0; i < l0.weight.size(); ++i) {
      l0.weight[i] = known[i] ? 1.0 : 0.0;
      any = any || known[i];
    }
    if (!any) return false;
    levels.push_back(std::move(l0));
  }

  while (levels.back().color.width() > 1 || levels.back().color.height() > 1) {
    const Level& fine = levels.back();
    const int fw = fine.color.width(), fh = fine.color.height();
    const int cw = (fw + 1) / 2, ch = (fh + 1) / 2;
    Level coarse{Image<double>(cw, ch, channels, 0.0), std::vector<double>(static_cast<std::size_t>(cw) * ch, 0.0)};
    std::vector<double> acc(static_cast<std::size_t>(channels));
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        double wsum = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int sx = 2 * x + dx, sy = 2 * y + dy;
            if (sx >= fw || sy >= fh) continue;
            const double w = fine.weight[static_cast<std::size_t>(sy) * fw + sx];
            if (w == 0.0) continue;
            wsum += w;
            for (int c = 0; c < channels; ++c) acc[c] += w * fine.color.at(sx, sy, c);
          }
        if (wsum > 0.0) {
          for (int c = 0; c < channels; ++c) coarse.color.at(x, y, c) = acc[c] / wsum;
          coarse.weight[static_cast<std::size_t>(y) * cw + x] = std::min(1.0, wsum);
        }
      }
    }
    levels.push_back(std::move(coarse));
  }

  std::vector<double> up(static_cast<std::size_t>(channels));
  for (std::size_t li = levels.size() - 1; li-- > 0;) {
    Level& fine = levels[li];
    const Image<double>& coarse = levels[li + 1].color;
    const int fw = fine.color.width();
    for (int y = 0; y < fine.color.height(); ++y) {
      for (int x = 0; x < fw; ++x) {
        double& w = fine.weight[static_cast<std::size_t>(y) * fw + x];
        if (w >= 1.0) continue;
        sample_bilinear(coarse, (x + 0.5) / 2.0, (y + 0.5) / 2.0, up);
        for (int c = 0; c < channels; ++c) fine.color.at(x, y, c) = w * fine.color.at(x, y, c) + (1.0 - w) * up[c];
        w = 1.0;
      }
    }
  }

  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (known[i]) continue;
    for (int c = 0; c < channels; ++c) img.data()[i * channels + c] = levels[0].color.data()[i * channels + c];
  }
  return true;
}

}  // namespace forge
