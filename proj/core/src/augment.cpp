#include "sasreid/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sasreid::augment {

JitterParams sample_jitter(Rng& rng, double h, double p_c) {
  if (!(h >= 0.0 && h <= 0.5)) throw std::invalid_argument("sample_jitter: hue bound must lie in [0, 0.5]");
  if (!(p_c >= 0.0 && p_c <= 1.0)) throw std::invalid_argument("sample_jitter: probability must lie in [0, 1]");
  JitterParams p;
  // Both draws always consume the stream so later draws do not depend on p_c.
  const double coin = uniform01(rng);
  const double u = uniform01(rng);
  p.applied = coin < p_c;
  p.phi = h * (2.0 * u - 1.0);
  return p;
}

Image adjust_hue(const Image& frame, double phi) {
  if (phi == 0.0) return frame;
  Image out = frame;
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    Hsv hsv = rgb_to_hsv({frame.data[i], frame.data[i + 1], frame.data[i + 2]});
    if (hsv[1] == 0.0) continue;
    hsv[0] = hsv[0] + phi;
    hsv[0] -= std::floor(hsv[0]);
    const Rgb rgb = hsv_to_rgb(hsv);
    for (int k = 0; k < 3; ++k) out.data[i + static_cast<std::size_t>(k)] = static_cast<float>(rgb[static_cast<std::size_t>(k)]);
  }
  return out;
}

std::vector<Image> apply_tracklet(const std::vector<Image>& frames, const JitterParams& params) {
  if (!params.applied) return frames;
  std::vector<Image> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(adjust_hue(f, params.phi));
  return out;
}

EraseRect sample_erase_rect(Rng& rng, int height, int width, double min_area, double max_area) {
  const double total = static_cast<double>(height) * width;
  const double area = total * (min_area + (max_area - min_area) * uniform01(rng));
  // Log-uniform aspect in [0.3, 1/0.3].
  const double log_lo = std::log(0.3);
  const double aspect = std::exp(log_lo + (-2.0 * log_lo) * uniform01(rng));
  EraseRect r;
  r.height = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, height);
  r.width = std::clamp(static_cast<int>(std::lround(std::sqrt(area / aspect))), 1, width);
  r.top = static_cast<int>(uniform01(rng) * (height - r.height + 1));
  r.left = static_cast<int>(uniform01(rng) * (width - r.width + 1));
  r.top = std::min(r.top, height - r.height);
  r.left = std::min(r.left, width - r.width);
  return r;
}

Image hflip(const Image& frame) {
  Image out(frame.height, frame.width);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = frame.at(y, frame.width - 1 - x, c);
    }
  }
  return out;
}

std::vector<Image> flip_and_erase(const std::vector<Image>& frames, Rng& rng, const FlipEraseOptions& opts) {
  if (frames.empty()) throw std::invalid_argument("flip_and_erase: empty tracklet");
  const bool flip = uniform01(rng) < opts.flip_probability;
  std::vector<Image> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    Image img = flip ? hflip(f) : f;
    const bool erase = uniform01(rng) < opts.erase_probability;
    const EraseRect r = sample_erase_rect(rng, img.height, img.width, opts.min_area, opts.max_area);
    if (erase) {
      for (int y = r.top; y < r.top + r.height; ++y) {
        for (int x = r.left; x < r.left + r.width; ++x) {
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(opts.fill[static_cast<std::size_t>(c)]);
        }
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

Rgb mean_color(const std::vector<std::vector<Image>>& tracklets) {
  Rgb sum{0, 0, 0};
  double n = 0;
  for (const auto& tr : tracklets) {
    for (const auto& f : tr) {
      for (std::size_t i = 0; i < f.data.size(); i += 3) {
        for (std::size_t k = 0; k < 3; ++k) sum[k] += f.data[i + k];
      }
      n += static_cast<double>(f.data.size() / 3);
    }
  }
  if (n == 0) return {0.5, 0.5, 0.5};
  return {sum[0] / n, sum[1] / n, sum[2] / n};
}

}  // namespace sasreid::augment
