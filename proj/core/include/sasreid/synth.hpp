#pragma once

// Procedural aerial/ground cloth-changing tracklet dataset and its manifest.

#include "sasreid/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sasreid::synth {

enum class Platform { kAerial, kGround };

std::string_view to_string(Platform p);
Platform parse_platform(std::string_view token);  // throws DataError

inline constexpr int kShapeDim = 10;
using ShapeLatent = std::array<float, kShapeDim>;

struct SynthConfig {
  int num_identities = 32;
  bool aerial = true;
  bool ground = true;
  int sessions = 2;
  int tracklets_per_cell = 3;
  int frames_per_tracklet = 16;
  int image_height = 56;
  int image_width = 28;
  double noise_std = 0.03;
  int blur_aerial = 1;
  double hue_cast = 0.08;  // max per-tracklet camera hue rotation, fraction of the circle
  std::uint64_t seed = 0;

  /// Checks the config against the model's patch size and largest stride.
  void validate(int patch_size = 14, int max_stride = 8) const;
  std::vector<Platform> platforms() const;
};

struct TrackletRecord {
  std::string tracklet_id;
  int identity = 0;  // 1-based
  Platform platform = Platform::kGround;
  int session = 1;  // 1 or 2
  std::string frame_dir;  // relative to the manifest directory
  ShapeLatent shape{};

  friend bool operator==(const TrackletRecord&, const TrackletRecord&) = default;
};

/// Persistent per-identity appearance traits.
struct IdentityTraits {
  double signature_hue = 0;    // head / belt; never changes
  double accent_hue = 0;       // collar / shoes; never changes
  std::array<double, 4> tone{};  // brightness of head, belt, collar, shoes; never changes
  double top_hue = 0;          // clothing, session 1
  double bottom_hue = 0;
  double session_hue_offset = 0;  // added to clothing hues in session 2
  int stripe_period = 3;
  int stripe_phase = 0;
  double gait_frequency = 0;  // radians per frame
  ShapeLatent shape{};
};

std::vector<IdentityTraits> make_identity_traits(const SynthConfig& config);

/// Body height over torso width of the rendered figure, in pixels.
double figure_aspect(const ShapeLatent& shape, Platform platform, int height, int width);

struct Tracklet {
  TrackletRecord record;
  std::vector<Image> frames;
};

/// Renders the whole dataset in memory. Pure function of the config.
std::vector<Tracklet> render_dataset(const SynthConfig& config);

/// Renders and writes frames plus `manifest.tsv` under `out_dir`. Returns the records.
std::vector<TrackletRecord> generate_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

/// Tab-separated: tracklet_id identity platform session frame_dir. Shape
/// latents go to `<path>.beta`, 10 little-endian float32 per identity.
void write_manifest(const std::vector<TrackletRecord>& records, const std::filesystem::path& path);
std::vector<TrackletRecord> read_manifest(const std::filesystem::path& path);

/// Loads all frames of every record (sorted by filename) relative to the manifest.
std::vector<Tracklet> load_dataset(const std::filesystem::path& manifest_path);

std::string frame_filename(int index);

/// FNV-1a over manifest text, shape sidecar, and frame bytes.
std::uint64_t dataset_checksum(const std::filesystem::path& manifest_path);

/// Identity split: the first half of the identity range trains, the rest is held out.
bool is_train_identity(int identity, int num_identities);
int num_identities_in(const std::vector<TrackletRecord>& records);

}  // namespace sasreid::synth
