#include "sasreid/synth.hpp"

#include "sasreid/errors.hpp"
#include "sasreid/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace sasreid::synth {
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct TrackletStyle {
  double background_hue;
  double hue_cast;  // camera white-balance error, rotates every hue
  double background_value;
  double illumination;
  double x_offset;
  double gait_phase;
  std::vector<float> background_texture;  // H*W luminance perturbation
};

struct Geometry {
  double top, bottom;        // figure extent in rows
  double head_rx, head_ry;   // ellipse radii
  double torso_half_width;
  double torso_bottom;
  double leg_width;
  double belt_height;
  double collar_height;
  double shoe_height;
};

double wrap01(double h) { return h - std::floor(h); }

Geometry figure_geometry(const IdentityTraits& id, Platform platform, int H, int W) {
  const auto& b = id.shape;
  const double height_frac = 0.80 + 0.10 * std::tanh(b[0]);
  const double width_frac = 0.40 + 0.14 * std::tanh(b[1]);
  const double head_frac = 0.10 + 0.025 * std::tanh(b[2]);
  const double torso_frac = 0.45 + 0.08 * std::tanh(b[3]);
  const double leg_frac = 0.15 + 0.04 * std::tanh(b[4]);

  // Top-down view squashes the body and enlarges the head relative to it.
  const double squash = platform == Platform::kAerial ? 0.85 : 1.0;
  const double head_gain = platform == Platform::kAerial ? 1.10 : 1.0;

  Geometry g{};
  const double body_h = height_frac * H * squash;
  g.top = 0.5 * (H - body_h);
  g.bottom = g.top + body_h;
  g.head_ry = head_frac * H * head_gain;
  g.head_rx = 0.8 * g.head_ry;
  const double neck = g.top + 2.0 * g.head_ry;
  g.torso_half_width = 0.5 * width_frac * W;
  g.torso_bottom = neck + torso_frac * (g.bottom - neck);
  g.leg_width = leg_frac * W;
  g.belt_height = 0.10 * (g.bottom - neck);
  g.collar_height = 0.12 * (g.bottom - neck);
  g.shoe_height = 0.10 * (g.bottom - neck);
  return g;
}

Rgb shade(double hue, double sat, double val, double illumination) {
  return hsv_to_rgb({wrap01(hue), sat, std::clamp(val * illumination, 0.0, 1.0)});
}

Image render_frame(const SynthConfig& cfg, const IdentityTraits& id, const TrackletStyle& style, Platform platform,
                   int session, int t, Rng& noise_rng) {
  const int H = cfg.image_height;
  const int W = cfg.image_width;
  const Geometry g = figure_geometry(id, platform, H, W);
  const double hue_shift = session == 2 ? id.session_hue_offset : 0.0;

  const double cx = 0.5 * W + style.x_offset;
  const double swing = std::sin(id.gait_frequency * t + style.gait_phase);
  const double gap = 1.0 + 1.6 * (1.0 + swing);
  const double bob = 0.6 * std::abs(swing);
  const double head_cy = g.top + g.head_ry + bob;

  const double cast = style.hue_cast;
  const auto& tone = id.tone;
  const Rgb head = shade(id.signature_hue + cast, 0.80, tone[0], style.illumination);
  const Rgb belt = shade(id.signature_hue + cast, 0.80, tone[1], style.illumination);
  const Rgb collar = shade(id.accent_hue + cast, 0.85, tone[2], style.illumination);
  const Rgb shoes = shade(id.accent_hue + cast, 0.85, tone[3], style.illumination);
  const Rgb bottom = shade(id.bottom_hue + cast, 0.65, 0.55, style.illumination);

  auto sample = [&](double y, double x, int row) -> Rgb {
    const double dy = (y - head_cy) / g.head_ry;
    const double dx = (x - cx) / g.head_rx;
    if (dx * dx + dy * dy <= 1.0) return head;
    const double neck = g.top + 2.0 * g.head_ry + bob;
    if (y >= neck && y < g.torso_bottom + bob && std::abs(x - cx) <= g.torso_half_width) {
      if (y < neck + g.collar_height) return collar;
      if (y >= g.torso_bottom + bob - g.belt_height) return belt;
      const bool stripe = ((row + id.stripe_phase) / id.stripe_period) % 2 == 1;
      return shade(id.top_hue + hue_shift + cast, 0.70, stripe ? 0.50 : 0.80, style.illumination);
    }
    if (y >= g.torso_bottom + bob && y < g.bottom) {
      const double left_inner = cx - 0.5 * gap;
      const double right_inner = cx + 0.5 * gap;
      if ((x <= left_inner && x >= left_inner - g.leg_width) || (x >= right_inner && x <= right_inner + g.leg_width)) {
        return y >= g.bottom - g.shoe_height ? shoes : bottom;
      }
    }
    const double tex = style.background_texture[static_cast<std::size_t>(row * W + std::clamp(static_cast<int>(x), 0, W - 1))];
    return shade(style.background_hue + cast, 0.10, style.background_value + tex, 1.0);
  };

  Image img(H, W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      Rgb acc{0, 0, 0};
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const Rgb s = sample(r + 0.25 + 0.5 * sy, c + 0.25 + 0.5 * sx, r);
          for (int k = 0; k < 3; ++k) acc[k] += 0.25 * s[k];
        }
      }
      for (int k = 0; k < 3; ++k) img.at(r, c, k) = static_cast<float>(acc[k]);
    }
  }

  if (platform == Platform::kAerial && cfg.blur_aerial > 0) {
    // Box downscale by (radius + 1), then bilinear upscale back.
    const int f = cfg.blur_aerial + 1;
    const int h2 = (H + f - 1) / f;
    const int w2 = (W + f - 1) / f;
    std::vector<double> small(static_cast<std::size_t>(h2 * w2 * 3), 0.0);
    for (int r = 0; r < h2; ++r) {
      for (int c = 0; c < w2; ++c) {
        for (int k = 0; k < 3; ++k) {
          double s = 0;
          int n = 0;
          for (int yy = r * f; yy < std::min(H, (r + 1) * f); ++yy) {
            for (int xx = c * f; xx < std::min(W, (c + 1) * f); ++xx) {
              s += img.at(yy, xx, k);
              ++n;
            }
          }
          small[static_cast<std::size_t>((r * w2 + c) * 3 + k)] = s / n;
        }
      }
    }
    for (int r = 0; r < H; ++r) {
      const double sy = std::clamp((r + 0.5) / f - 0.5, 0.0, h2 - 1.0);
      const int y0 = static_cast<int>(sy);
      const int y1 = std::min(y0 + 1, h2 - 1);
      const double fy = sy - y0;
      for (int c = 0; c < W; ++c) {
        const double sx = std::clamp((c + 0.5) / f - 0.5, 0.0, w2 - 1.0);
        const int x0 = static_cast<int>(sx);
        const int x1 = std::min(x0 + 1, w2 - 1);
        const double fx = sx - x0;
        for (int k = 0; k < 3; ++k) {
          auto at = [&](int y, int x) { return small[static_cast<std::size_t>((y * w2 + x) * 3 + k)]; };
          const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
          img.at(r, c, k) = static_cast<float>(v);
        }
      }
    }
  }

  if (cfg.noise_std > 0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (auto& v : img.data) v = static_cast<float>(v + noise(noise_rng));
  }
  quantize(img);
  return img;
}

std::string tracklet_name(int identity, Platform p, int session, int k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "p%04d_%c_s%d_%02d", identity, p == Platform::kAerial ? 'a' : 'g', session, k);
  return buf;
}

}  // namespace

std::string_view to_string(Platform p) { return p == Platform::kAerial ? "aerial" : "ground"; }

Platform parse_platform(std::string_view token) {
  if (token == "aerial") return Platform::kAerial;
  if (token == "ground") return Platform::kGround;
  throw DataError("unknown platform token '" + std::string(token) + "'");
}

void SynthConfig::validate(int patch_size, int max_stride) const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid synth config: " + m); };
  if (num_identities < 2) fail("num_identities must be >= 2");
  if (!aerial && !ground) fail("at least one platform required");
  if (sessions < 1 || sessions > 2) fail("sessions must be 1 or 2");
  if (tracklets_per_cell < 1) fail("tracklets_per_cell must be >= 1");
  if (frames_per_tracklet < max_stride) fail("frames_per_tracklet must be >= the largest temporal stride");
  if (image_height <= 0 || image_width <= 0 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    fail("image dimensions must be positive multiples of the patch size");
  }
  if (!(noise_std >= 0.0 && noise_std <= 1.0)) fail("noise_std must lie in [0, 1]");
  if (blur_aerial < 0) fail("blur_aerial must be >= 0");
  if (!(hue_cast >= 0.0 && hue_cast <= 0.5)) fail("hue_cast must lie in [0, 0.5]");
}

std::vector<Platform> SynthConfig::platforms() const {
  std::vector<Platform> out;
  if (aerial) out.push_back(Platform::kAerial);
  if (ground) out.push_back(Platform::kGround);
  return out;
}

double figure_aspect(const ShapeLatent& shape, Platform platform, int height, int width) {
  IdentityTraits id;
  id.shape = shape;
  const Geometry g = figure_geometry(id, platform, height, width);
  return (g.bottom - g.top) / (2.0 * g.torso_half_width);
}

std::vector<IdentityTraits> make_identity_traits(const SynthConfig& config) {
  Rng rng = derive_rng(config.seed, 1);
  const int Y = config.num_identities;
  std::vector<int> slot(static_cast<std::size_t>(Y));
  std::iota(slot.begin(), slot.end(), 0);
  std::shuffle(slot.begin(), slot.end(), rng);
  std::vector<int> accent_slot = slot;
  std::shuffle(accent_slot.begin(), accent_slot.end(), rng);

  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<IdentityTraits> out(static_cast<std::size_t>(Y));
  for (int y = 0; y < Y; ++y) {
    auto& id = out[static_cast<std::size_t>(y)];
    // Slot spacing of 1/Y with at most half a slot of jitter keeps neighbours >= 1/(2Y) apart.
    id.signature_hue = (slot[static_cast<std::size_t>(y)] + 0.5 * uniform01(rng)) / Y;
    id.accent_hue = (accent_slot[static_cast<std::size_t>(y)] + 0.5 * uniform01(rng)) / Y;
    id.top_hue = uniform01(rng);
    id.bottom_hue = uniform01(rng);
    id.session_hue_offset = 0.3 + 0.4 * uniform01(rng);
    id.stripe_period = 2 + static_cast<int>(uniform01(rng) * 4.0);
    id.stripe_phase = static_cast<int>(uniform01(rng) * 8.0);
    id.gait_frequency = 0.3 + 0.6 * uniform01(rng);
    for (auto& b : id.shape) b = gauss(rng);
    for (auto& v : id.tone) v = 0.35 + 0.6 * uniform01(rng);
  }
  return out;
}

std::vector<Tracklet> render_dataset(const SynthConfig& config) {
  config.validate();
  const auto traits = make_identity_traits(config);
  const int H = config.image_height;
  const int W = config.image_width;

  std::vector<Tracklet> out;
  std::uint64_t stream = 1000;
  for (int y = 1; y <= config.num_identities; ++y) {
    const auto& id = traits[static_cast<std::size_t>(y - 1)];
    for (Platform p : config.platforms()) {
      for (int session = 1; session <= config.sessions; ++session) {
        for (int k = 0; k < config.tracklets_per_cell; ++k) {
          Rng rng = derive_rng(config.seed, stream++);
          TrackletStyle style;
          style.background_hue = uniform01(rng);
          style.hue_cast = config.hue_cast * (2.0 * uniform01(rng) - 1.0);
          style.background_value = 0.40 + 0.15 * uniform01(rng);
          style.illumination = (session == 2 ? 0.95 : 1.0) * (0.95 + 0.1 * uniform01(rng));
          style.x_offset = 3.0 * (uniform01(rng) - 0.5);
          style.gait_phase = 2.0 * kPi * uniform01(rng);
          style.background_texture.resize(static_cast<std::size_t>(H * W));
          for (auto& v : style.background_texture) v = static_cast<float>(0.06 * (uniform01(rng) - 0.5));

          Tracklet tr;
          tr.record.tracklet_id = tracklet_name(y, p, session, k);
          tr.record.identity = y;
          tr.record.platform = p;
          tr.record.session = session;
          tr.record.frame_dir = "frames/" + tr.record.tracklet_id;
          tr.record.shape = id.shape;
          tr.frames.reserve(static_cast<std::size_t>(config.frames_per_tracklet));
          for (int t = 0; t < config.frames_per_tracklet; ++t) {
            tr.frames.push_back(render_frame(config, id, style, p, session, t, rng));
          }
          out.push_back(std::move(tr));
        }
      }
    }
  }
  return out;
}

std::string frame_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.ppm", index);
  return buf;
}

std::vector<TrackletRecord> generate_dataset(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  const auto probe = out_dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw DataError("output directory is not writable: " + out_dir.string());
  }
  fs::remove(probe, ec);

  const auto tracklets = render_dataset(config);
  std::vector<TrackletRecord> records;
  records.reserve(tracklets.size());
  for (const auto& tr : tracklets) {
    const auto dir = out_dir / tr.record.frame_dir;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t t = 0; t < tr.frames.size(); ++t) write_ppm(tr.frames[t], dir / frame_filename(static_cast<int>(t)));
    records.push_back(tr.record);
  }
  write_manifest(records, out_dir / "manifest.tsv");
  return records;
}

void write_manifest(const std::vector<TrackletRecord>& records, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  int max_id = 0;
  for (const auto& r : records) {
    out << r.tracklet_id << '\t' << r.identity << '\t' << to_string(r.platform) << '\t' << r.session << '\t'
        << r.frame_dir << '\n';
    max_id = std::max(max_id, r.identity);
  }
  if (!out) throw DataError("write failed: " + path.string());

  // Sidecar: identity i occupies floats [10(i-1), 10i). Identities without records stay zero.
  std::vector<float> shapes(static_cast<std::size_t>(max_id * kShapeDim), 0.0f);
  for (const auto& r : records) {
    std::copy(r.shape.begin(), r.shape.end(), shapes.begin() + (r.identity - 1) * kShapeDim);
  }
  std::ofstream side(path.string() + ".beta", std::ios::binary);
  if (!side) throw DataError("cannot open for writing: " + path.string() + ".beta");
  for (float f : shapes) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                           static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    side.write(reinterpret_cast<const char*>(le), 4);
  }
}

std::vector<TrackletRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path.string());

  std::vector<TrackletRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 5) fail("expected 5 tab-separated fields, got " + std::to_string(fields.size()));

    TrackletRecord r;
    r.tracklet_id = fields[0];
    try {
      std::size_t pos = 0;
      r.identity = std::stoi(fields[1], &pos);
      if (pos != fields[1].size() || r.identity < 1) fail("bad identity '" + fields[1] + "'");
    } catch (const std::logic_error&) {
      fail("bad identity '" + fields[1] + "'");
    }
    try {
      r.platform = parse_platform(fields[2]);
    } catch (const DataError& e) {
      fail(e.what());
    }
    if (fields[3] == "1") {
      r.session = 1;
    } else if (fields[3] == "2") {
      r.session = 2;
    } else {
      fail("unknown session token '" + fields[3] + "'");
    }
    r.frame_dir = fields[4];
    records.push_back(std::move(r));
  }

  const fs::path side = path.string() + ".beta";
  if (!records.empty()) {
    std::ifstream sin(side, std::ios::binary);
    if (!sin) throw DataError("cannot open shape sidecar: " + side.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(sin)), std::istreambuf_iterator<char>());
    for (auto& r : records) {
      const std::size_t off = static_cast<std::size_t>((r.identity - 1) * kShapeDim * 4);
      if (off + kShapeDim * 4 > bytes.size()) {
        throw DataError(side.string() + ": missing shape latent for identity " + std::to_string(r.identity));
      }
      for (int k = 0; k < kShapeDim; ++k) {
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + off + static_cast<std::size_t>(k * 4));
        const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                                   (std::uint32_t{p[3]} << 24);
        r.shape[static_cast<std::size_t>(k)] = std::bit_cast<float>(bits);
      }
    }
  }
  return records;
}

std::vector<Tracklet> load_dataset(const fs::path& manifest_path) {
  const auto records = read_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  std::vector<Tracklet> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Tracklet tr{r, {}};
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(root / r.frame_dir, ec)) {
      if (e.path().extension() == ".ppm") files.push_back(e.path());
    }
    if (ec) throw DataError("cannot list frames in " + (root / r.frame_dir).string() + ": " + ec.message());
    if (files.empty()) throw DataError("no frames for tracklet " + r.tracklet_id);
    std::sort(files.begin(), files.end());
    for (const auto& f : files) tr.frames.push_back(read_ppm(f));
    out.push_back(std::move(tr));
  }
  return out;
}

std::uint64_t dataset_checksum(const fs::path& manifest_path) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed_file = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open: " + p.string());
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 1099511628211ull;
      }
    }
  };
  feed_file(manifest_path);
  feed_file(manifest_path.string() + ".beta");
  const auto root = manifest_path.parent_path();
  for (const auto& r : read_manifest(manifest_path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root / r.frame_dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) feed_file(f);
  }
  return h;
}

bool is_train_identity(int identity, int num_identities) { return identity <= num_identities / 2; }

int num_identities_in(const std::vector<TrackletRecord>& records) {
  int m = 0;
  for (const auto& r : records) m = std::max(m, r.identity);
  return m;
}

}  // namespace sasreid::synth
