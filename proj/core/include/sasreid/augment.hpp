#pragma once

// Training-time augmentation. Hue jitter and flips are drawn once per
// tracklet and shared by every frame; erasing is drawn per frame.

#include "sasreid/image.hpp"
#include "sasreid/rng.hpp"

#include <optional>
#include <vector>

namespace sasreid::augment {

struct JitterParams {
  double phi = 0.0;  // fraction of the hue circle
  bool applied = false;
};

/// One draw per tracklet: applied ~ Bernoulli(p_c), phi ~ U(-h, h).
JitterParams sample_jitter(Rng& rng, double h, double p_c);

Image adjust_hue(const Image& frame, double phi);

std::vector<Image> apply_tracklet(const std::vector<Image>& frames, const JitterParams& params);

struct EraseRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

struct FlipEraseOptions {
  double flip_probability = 0.5;
  double erase_probability = 0.5;
  double min_area = 0.02;
  double max_area = 0.2;
  Rgb fill{0.5, 0.5, 0.5};  // dataset mean colour
};

/// Rectangle with area fraction in [min_area, max_area] lying inside the image.
EraseRect sample_erase_rect(Rng& rng, int height, int width, double min_area, double max_area);

Image hflip(const Image& frame);

std::vector<Image> flip_and_erase(const std::vector<Image>& frames, Rng& rng, const FlipEraseOptions& opts = {});

/// Mean RGB over all pixels of the given frames.
Rgb mean_color(const std::vector<std::vector<Image>>& tracklets);

}  // namespace sasreid::augment
