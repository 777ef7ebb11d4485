#include "sasreid/errors.hpp"
#include "sasreid/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace sasreid;
using namespace sasreid::synth;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.num_identities = 4;
  c.tracklets_per_cell = 3;
  c.frames_per_tracklet = 8;
  return c;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sasreid_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double circular_gap(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

double pixel_distance(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

}  // namespace

TEST_CASE("record count is identities x platforms x sessions x tracklets") {
  const auto data = render_dataset(small_config());
  CHECK(data.size() == 48);
  std::map<std::tuple<int, Platform, int>, int> cells;
  for (const auto& t : data) {
    CHECK(t.frames.size() == 8);
    ++cells[{t.record.identity, t.record.platform, t.record.session}];
  }
  CHECK(cells.size() == 16);
  for (const auto& [k, n] : cells) CHECK(n == 3);
}

TEST_CASE("rendering is a pure function of the config") {
  const auto a = render_dataset(small_config());
  const auto b = render_dataset(small_config());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].record == b[i].record);
    CHECK(a[i].frames == b[i].frames);
  }
  auto other = small_config();
  other.seed = 1;
  CHECK(render_dataset(other)[0].frames != a[0].frames);
}

TEST_CASE("distinct identities have hue signatures at least 1/(2Y) apart") {
  for (int Y : {2, 4, 16, 32, 64}) {
    SynthConfig c;
    c.num_identities = Y;
    const auto traits = make_identity_traits(c);
    for (int i = 0; i < Y; ++i) {
      for (int j = i + 1; j < Y; ++j) {
        CHECK(circular_gap(traits[i].signature_hue, traits[j].signature_hue) >= 1.0 / (2.0 * Y) - 1e-12);
      }
    }
  }
}

TEST_CASE("shape latent is constant per identity across sessions and platforms") {
  const auto data = render_dataset(small_config());
  std::map<int, ShapeLatent> seen;
  for (const auto& t : data) {
    auto [it, fresh] = seen.emplace(t.record.identity, t.record.shape);
    if (!fresh) CHECK(it->second == t.record.shape);
  }
  CHECK(seen.at(1) != seen.at(2));
}

TEST_CASE("shape latent controls the figure aspect ratio") {
  ShapeLatent base{};
  const double a0 = figure_aspect(base, Platform::kGround, 56, 28);
  ShapeLatent taller = base;
  taller[0] = 1.0f;
  ShapeLatent wider = base;
  wider[1] = 1.0f;
  CHECK(figure_aspect(taller, Platform::kGround, 56, 28) > a0);
  CHECK(figure_aspect(wider, Platform::kGround, 56, 28) < a0);
  // the aerial squash shortens the figure
  CHECK(figure_aspect(base, Platform::kAerial, 56, 28) < a0);
}

TEST_CASE("intra-identity pixel distance is below inter-identity distance") {
  SynthConfig c = small_config();
  c.noise_std = 0.05;
  const auto data = render_dataset(c);
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = i + 1; j < data.size(); ++j) {
      const double d = pixel_distance(data[i].frames[0], data[j].frames[0]);
      if (data[i].record.identity == data[j].record.identity) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  CHECK(intra / n_intra < inter / n_inter);
}

TEST_CASE("config validation") {
  SynthConfig c = small_config();
  c.num_identities = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.image_height = 50;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.frames_per_tracklet = 4;
  CHECK_THROWS_AS(c.validate(14, 8), ConfigError);
  c = small_config();
  c.noise_std = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(small_config().validate());
}

TEST_CASE("manifest round trip") {
  const auto dir = temp_dir("manifest");
  SUBCASE("empty") {
    write_manifest({}, dir / "empty.tsv");
    CHECK(fs::file_size(dir / "empty.tsv") == 0);
    CHECK(read_manifest(dir / "empty.tsv").empty());
  }
  SUBCASE("48 records") {
    std::vector<TrackletRecord> recs;
    for (const auto& t : render_dataset(small_config())) recs.push_back(t.record);
    write_manifest(recs, dir / "m.tsv");
    CHECK(read_manifest(dir / "m.tsv") == recs);
  }
  SUBCASE("unknown platform names its line") {
    std::vector<TrackletRecord> recs;
    for (const auto& t : render_dataset(small_config())) recs.push_back(t.record);
    write_manifest(recs, dir / "bad.tsv");
    std::ifstream in(dir / "bad.tsv");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    auto first_nl = text.find('\n');
    auto second_line_platform = text.find("aerial", first_nl);
    if (second_line_platform == std::string::npos) second_line_platform = text.find("ground", first_nl);
    text.replace(second_line_platform, 6, "orbital");
    std::ofstream(dir / "bad.tsv") << text;
    try {
      read_manifest(dir / "bad.tsv");
      FAIL("expected a parse error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
      CHECK(std::string(e.what()).find("orbital") != std::string::npos);
    }
  }
  SUBCASE("malformed line") {
    std::ofstream(dir / "short.tsv") << "t0\t1\taerial\n";
    CHECK_THROWS_AS(read_manifest(dir / "short.tsv"), DataError);
  }
  SUBCASE("bad session") {
    std::ofstream(dir / "sess.tsv") << "t0\t1\taerial\t3\tframes/t0\n";
    CHECK_THROWS_AS(read_manifest(dir / "sess.tsv"), DataError);
  }
}

TEST_CASE("generated dataset on disk reloads bit-identically") {
  const auto dir = temp_dir("generate");
  SynthConfig c = small_config();
  c.num_identities = 2;
  c.tracklets_per_cell = 1;
  const auto recs = generate_dataset(c, dir);
  CHECK(recs.size() == 8);
  const auto loaded = load_dataset(dir / "manifest.tsv");
  const auto rendered = render_dataset(c);
  REQUIRE(loaded.size() == rendered.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].record == rendered[i].record);
    CHECK(loaded[i].frames == rendered[i].frames);
  }
  const auto sum1 = dataset_checksum(dir / "manifest.tsv");
  const auto dir2 = temp_dir("generate2");
  generate_dataset(c, dir2);
  CHECK(dataset_checksum(dir2 / "manifest.tsv") == sum1);
}

TEST_CASE("identity split holds out the upper half") {
  CHECK(is_train_identity(1, 32));
  CHECK(is_train_identity(16, 32));
  CHECK_FALSE(is_train_identity(17, 32));
  CHECK_FALSE(is_train_identity(32, 32));
}
