#include "sasreid/config.hpp"

#include "sasreid/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sasreid {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value for '" + key + "': '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, std::string v) {
  for (char& c : v) {
    if (c == ',' || c == '[' || c == ']') c = ' ';
  }
  std::istringstream ss(v);
  std::vector<int> out;
  std::string tok;
  while (ss >> tok) out.push_back(parse_number<int>(key, tok));
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double d) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, end);
}

std::string fmt_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Binding {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SASREID_INT(name, field)                                                                                    \
  Binding{name, [](TrainConfig& c, const std::string& v) { c.field = parse_number<int>(name, v); },               \
          [](const TrainConfig& c) { return std::to_string(c.field); }}
#define SASREID_DOUBLE(name, field)                                                                                 \
  Binding{name, [](TrainConfig& c, const std::string& v) { c.field = parse_number<double>(name, v); },            \
          [](const TrainConfig& c) { return fmt(c.field); }}
#define SASREID_BOOL(name, field)                                                                                   \
  Binding{name, [](TrainConfig& c, const std::string& v) { c.field = parse_bool(name, v); },                      \
          [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      SASREID_INT("epochs", epochs),
      SASREID_INT("ids_per_batch", ids_per_batch),
      SASREID_INT("tracklets_per_id", tracklets_per_id),
      SASREID_INT("frames_per_tracklet", frames_per_tracklet),
      SASREID_DOUBLE("base_lr", base_lr),
      SASREID_DOUBLE("backbone_lr", backbone_lr),
      SASREID_INT("warmup_iters", warmup_iters),
      SASREID_DOUBLE("warmup_start_lr", warmup_start_lr),
      Binding{"decay_epochs", [](TrainConfig& c, const std::string& v) { c.decay_epochs = parse_int_list("decay_epochs", v); },
              [](const TrainConfig& c) { return fmt_list(c.decay_epochs); }},
      SASREID_DOUBLE("decay_factor", decay_factor),
      Binding{"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
              [](const TrainConfig& c) { return std::to_string(c.seed); }},
      SASREID_INT("proxies", proxies),
      SASREID_DOUBLE("momentum", momentum),
      SASREID_DOUBLE("temperature", temperature),
      SASREID_DOUBLE("hue_bound", hue_bound),
      SASREID_DOUBLE("jitter_prob", jitter_prob),
      SASREID_DOUBLE("flip_prob", flip_prob),
      SASREID_DOUBLE("erase_prob", erase_prob),
      SASREID_DOUBLE("lambda_id", weights.lambda_id),
      SASREID_DOUBLE("lambda_me", weights.lambda_me),
      SASREID_DOUBLE("lambda_alpha", weights.lambda_alpha),
      SASREID_DOUBLE("margin", weights.margin),
      SASREID_DOUBLE("label_smoothing", weights.smoothing),
      SASREID_INT("dim", dim),
      SASREID_INT("depth", depth),
      SASREID_INT("heads", heads),
      SASREID_INT("patch_size", patch_size),
      SASREID_INT("image_height", image_height),
      SASREID_INT("image_width", image_width),
      Binding{"strides", [](TrainConfig& c, const std::string& v) { c.strides = parse_int_list("strides", v); },
              [](const TrainConfig& c) { return fmt_list(c.strides); }},
      SASREID_BOOL("use_mdlr", use_mdlr),
      SASREID_BOOL("use_vccj", use_vccj),
      SASREID_BOOL("use_mgtm", use_mgtm),
      SASREID_BOOL("use_prsd", use_prsd),
  };
  return table;
}

#undef SASREID_INT
#undef SASREID_DOUBLE
#undef SASREID_BOOL

}  // namespace

ModelConfig TrainConfig::model_config(int num_classes) const {
  ModelConfig m;
  m.encoder.image_height = image_height;
  m.encoder.image_width = image_width;
  m.encoder.patch_size = patch_size;
  m.encoder.depth = depth;
  m.encoder.heads = heads;
  m.encoder.dim = dim;
  m.strides = strides;
  m.frames = frames_per_tracklet;
  m.num_classes = num_classes;
  m.use_mgtm = use_mgtm;
  m.use_prsd = use_prsd;
  m.seed = seed;
  return m;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid train config: " + m); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (ids_per_batch < 2) fail("ids_per_batch must be >= 2");
  if (tracklets_per_id < 1) fail("tracklets_per_id must be >= 1");
  if (frames_per_tracklet < 1) fail("frames_per_tracklet must be >= 1");
  if (base_lr < 0 || backbone_lr < 0 || warmup_start_lr < 0) fail("learning rates must be >= 0");
  if (warmup_iters < 0) fail("warmup_iters must be >= 0");
  if (proxies < 1) fail("proxies must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) fail("momentum must lie in [0, 1)");
  if (!(temperature > 0)) fail("temperature must be > 0");
  if (!(hue_bound >= 0 && hue_bound <= 0.5)) fail("hue_bound must lie in [0, 0.5]");
  if (!(jitter_prob >= 0 && jitter_prob <= 1)) fail("jitter_prob must lie in [0, 1]");
  for (int s : strides) {
    if (s < 1 || s > frames_per_tracklet) fail("strides must lie in [1, frames_per_tracklet]");
  }
  if (strides.empty()) fail("strides must not be empty");
  if (dim < 1 || depth < 1) fail("dim and depth must be >= 1");
  if (heads < 1 || dim % heads != 0) fail("dim must be divisible by heads");
  if (patch_size < 1 || image_height % patch_size != 0 || image_width % patch_size != 0) {
    fail("image size must be a multiple of patch_size");
  }
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& b : bindings()) {
    if (key == b.key) {
      b.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& b : bindings()) out.emplace_back(b.key, b.get(cfg));
  return out;
}

void apply_config_text(TrainConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

}  // namespace sasreid
