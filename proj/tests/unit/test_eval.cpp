#include "helpers.hpp"
#include "sasreid/errors.hpp"
#include "sasreid/eval.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace sasreid;
using namespace sasreid::eval;

namespace {

struct OracleMetrics {
  double map = 0;
  std::vector<double> cmc;
  int retained = 0;
};

// O(n_g^2) oracle: each gallery entry's rank is counted directly, ties by index.
OracleMetrics brute_force(const Matrix& d, const std::vector<int>& qid, const std::vector<int>& gid) {
  const auto n_g = static_cast<Eigen::Index>(gid.size());
  OracleMetrics m;
  m.cmc.assign(gid.size(), 0.0);
  double ap_sum = 0;
  for (Eigen::Index q = 0; q < d.rows(); ++q) {
    std::vector<int> pos_ranks;
    for (Eigen::Index g = 0; g < n_g; ++g) {
      if (gid[g] != qid[q]) continue;
      int rank = 1;
      for (Eigen::Index h = 0; h < n_g; ++h) {
        if (d(q, h) < d(q, g) || (d(q, h) == d(q, g) && h < g)) ++rank;
      }
      pos_ranks.push_back(rank);
    }
    if (pos_ranks.empty()) continue;
    std::sort(pos_ranks.begin(), pos_ranks.end());
    double ap = 0;
    for (std::size_t k = 0; k < pos_ranks.size(); ++k) ap += static_cast<double>(k + 1) / pos_ranks[k];
    ap_sum += ap / static_cast<double>(pos_ranks.size());
    ++m.retained;
    for (std::size_t k = 0; k < gid.size(); ++k) {
      if (pos_ranks.front() <= static_cast<int>(k + 1)) m.cmc[k] += 1.0;
    }
  }
  m.map = ap_sum / m.retained;
  for (auto& c : m.cmc) c /= m.retained;
  return m;
}

DescriptorMeta meta(std::string id, int identity, Platform p, int session) {
  return {std::move(id), identity, p, session};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sasreid_test_eval_" + name);
}

}  // namespace

TEST_CASE("fuse_descriptor") {
  const RowVector e = fuse_descriptor(RowVector{{3.0, 4.0}}, RowVector{{0.0, 1.0}}, RowVector::Zero(10));
  CHECK(e.cols() == 14);
  CHECK(e(0) == doctest::Approx(0.6));
  CHECK(e(1) == doctest::Approx(0.8));
  CHECK(e(2) == 0.0);
  CHECK(e(3) == 1.0);
  CHECK(e.tail(10).norm() == 0.0);

  const RowVector u{{0.0, 1.0, 0.0}};
  const RowVector w{{0.6, 0.0, 0.8}};
  RowVector cat(9);
  cat << u, w, u;
  CHECK((fuse_descriptor(u, w, u) - cat).norm() < 1e-15);

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const RowVector f = fuse_descriptor(testing::random_matrix(rng, 1, 8), testing::random_matrix(rng, 1, 8),
                                        testing::random_matrix(rng, 1, 10));
    CHECK(f.squaredNorm() == doctest::Approx(3.0).epsilon(1e-12));
  }
  CHECK_THROWS(fuse_descriptor(RowVector::Zero(2), u, u));
  CHECK_THROWS(fuse_descriptor(u, RowVector::Zero(2), u));
}

TEST_CASE("distance_matrix") {
  CHECK(distance_matrix(Matrix{{1.0, 2.0}}, Matrix{{2.0, 4.0}})(0, 0) == doctest::Approx(0.0).scale(1.0));
  CHECK(distance_matrix(Matrix{{1.0, 0.0}}, Matrix{{0.0, 3.0}})(0, 0) == doctest::Approx(1.0));
  CHECK_THROWS(distance_matrix(Matrix::Ones(1, 2), Matrix::Ones(1, 3)));

  Rng rng(2);
  const Matrix q = testing::random_matrix(rng, 100, 16);
  const Matrix g = testing::random_matrix(rng, 500, 16);
  const Matrix d = distance_matrix(q, g);
  double worst = 0;
  for (Eigen::Index i = 0; i < 100; ++i) {
    for (Eigen::Index j = 0; j < 500; ++j) {
      double dot = 0, nq = 0, ng = 0;
      for (Eigen::Index k = 0; k < 16; ++k) {
        dot += q(i, k) * g(j, k);
        nq += q(i, k) * q(i, k);
        ng += g(j, k) * g(j, k);
      }
      worst = std::max(worst, std::abs(d(i, j) - (1 - dot / std::sqrt(nq * ng))));
    }
  }
  CHECK(worst < 1e-6);
  CHECK((distance_matrix(g.topRows(7), q.topRows(5)) - d.topLeftCorner(5, 7).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("protocol_filter") {
  const auto protocols = standard_protocols();
  REQUIRE(protocols.size() == 3);
  CHECK(protocols[0].name == "A->G");
  CHECK(protocols[2].query == Platform::kAerial);
  CHECK(protocols[2].gallery == Platform::kAerial);

  SUBCASE("all-ground data has no aerial queries") {
    const std::vector<DescriptorMeta> m{meta("a", 1, Platform::kGround, 1), meta("b", 2, Platform::kGround, 2)};
    CHECK_THROWS(protocol_filter(m, protocols[0]));
  }
  SUBCASE("counts match a hand scan of a mixed manifest") {
    std::vector<DescriptorMeta> m;
    int n_aerial = 0, n_ground = 0;
    for (int id = 1; id <= 4; ++id)
      for (Platform p : {Platform::kAerial, Platform::kGround})
        for (int s = 1; s <= 2; ++s)
          for (int k = 0; k < 3; ++k) {
            m.push_back(meta(std::to_string(m.size()), id, p, s));
            (p == Platform::kAerial ? n_aerial : n_ground)++;
          }
    REQUIRE(m.size() == 48);
    for (const auto& pr : protocols) {
      const auto split = protocol_filter(m, pr);
      CHECK(split.queries.size() == static_cast<std::size_t>(pr.query == Platform::kAerial ? n_aerial : n_ground));
      CHECK(split.gallery.size() == static_cast<std::size_t>(pr.gallery == Platform::kAerial ? n_aerial : n_ground));
      for (std::size_t i : split.queries) CHECK(m[i].platform == pr.query);
      for (std::size_t i : split.gallery) CHECK(m[i].platform == pr.gallery);
    }
  }
  SUBCASE("one aerial tracklet per identity drops every A->A query") {
    DescriptorSet set;
    set.features = Matrix::Identity(6, 6);
    for (int id = 1; id <= 3; ++id) {
      set.meta.push_back(meta("a" + std::to_string(id), id, Platform::kAerial, 1));
      set.meta.push_back(meta("g" + std::to_string(id), id, Platform::kGround, 1));
    }
    const auto r = evaluate(set);
    CHECK_FALSE(r.protocols[2].available);
    CHECK(r.protocols[2].metrics.dropped_queries == 3);
    CHECK_FALSE(r.map3.has_value());
    std::ostringstream os;
    print_report(os, r);
    CHECK(os.str().find("n/a") != std::string::npos);
  }
}

TEST_CASE("cmc_map examples") {
  SUBCASE("positives at ranks 1 and 3") {
    const auto m = cmc_map(Matrix{{0.1, 0.2, 0.3}}, std::vector<int>{1}, std::vector<int>{1, 2, 1});
    CHECK(m.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2));
    CHECK(m.map == doctest::Approx(0.8333).epsilon(1e-4));
    CHECK(m.cmc_at(1) == 1.0);
  }
  SUBCASE("single positive first") {
    CHECK(cmc_map(Matrix{{0.0, 0.5}}, std::vector<int>{4}, std::vector<int>{4, 5}).map == 1.0);
  }
  SUBCASE("single positive second of two") {
    const auto m = cmc_map(Matrix{{0.9, 0.5}}, std::vector<int>{4}, std::vector<int>{4, 5});
    CHECK(m.map == 0.5);
    CHECK(m.cmc_at(1) == 0.0);
    CHECK(m.cmc_at(5) == 1.0);
  }
  SUBCASE("ties break by gallery index") {
    CHECK(cmc_map(Matrix{{0.3, 0.3}}, std::vector<int>{1}, std::vector<int>{2, 1}).map == 0.5);
    CHECK(cmc_map(Matrix{{0.3, 0.3}}, std::vector<int>{1}, std::vector<int>{1, 2}).map == 1.0);
  }
  SUBCASE("excluded entries leave the ranking") {
    const auto m = cmc_map(Matrix{{0.0, 0.1, 0.2}}, std::vector<int>{1}, std::vector<int>{1, 2, 1},
                           [](std::size_t, std::size_t g) { return g == 0; });
    CHECK(m.map == 0.5);
  }
  SUBCASE("query without positives is dropped") {
    const auto m = cmc_map(Matrix{{0.1, 0.2}, {0.1, 0.2}}, std::vector<int>{1, 9}, std::vector<int>{1, 2});
    CHECK(m.retained_queries == 1);
    CHECK(m.dropped_queries == 1);
    CHECK(m.map == 1.0);
  }
  CHECK_THROWS(cmc_map(Matrix::Zero(2, 2), std::vector<int>{1}, std::vector<int>{1, 2}));
}

TEST_CASE("cmc_map matches the brute-force oracle on 200 random instances") {
  Rng rng(3);
  std::uniform_int_distribution<int> nq_dist(1, 20), ng_dist(2, 50), id_dist(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const int nq = nq_dist(rng), ng = ng_dist(rng);
    std::vector<int> qid(static_cast<std::size_t>(nq)), gid(static_cast<std::size_t>(ng));
    for (auto& v : qid) v = id_dist(rng);
    for (auto& v : gid) v = id_dist(rng);
    gid[0] = qid[0];  // at least one retained query
    Matrix d = testing::random_matrix(rng, nq, ng);
    if (trial % 10 == 0) d = d.array().round().matrix();  // force ties
    const auto got = cmc_map(d, qid, gid);
    const auto want = brute_force(d, qid, gid);
    CHECK(std::abs(got.map - want.map) <= 1e-9);
    CHECK(got.retained_queries == want.retained);
    for (std::size_t k = 0; k < got.cmc.size(); ++k) CHECK(std::abs(got.cmc[k] - want.cmc[k]) <= 1e-9);

    // rank-only dependence
    const Matrix t = (d.array().cube() + 1.0).matrix();
    const auto moved = cmc_map(t, qid, gid);
    CHECK(moved.map == got.map);
    CHECK(moved.cmc == got.cmc);

    for (std::size_t k = 1; k < got.cmc.size(); ++k) CHECK(got.cmc[k] >= got.cmc[k - 1]);
    CHECK(got.cmc.back() == doctest::Approx(1.0));
    CHECK(got.map >= 0.0);
    CHECK(got.map <= 1.0);
  }
}

TEST_CASE("perfect ordering gives mAP 1") {
  Rng rng(4);
  const std::vector<int> qid{0, 1, 2};
  std::vector<int> gid;
  for (int i = 0; i < 30; ++i) gid.push_back(i % 3);
  Matrix d(3, 30);
  std::uniform_real_distribution<double> near(0.0, 0.4), far(0.5, 2.0);
  for (int q = 0; q < 3; ++q)
    for (int g = 0; g < 30; ++g) d(q, g) = gid[static_cast<std::size_t>(g)] == q ? near(rng) : far(rng);
  CHECK(cmc_map(d, qid, gid).map == 1.0);
}

TEST_CASE("map3") {
  CHECK(map3(std::vector<double>{1, 1, 1}) == 1.0);
  CHECK(map3(std::vector<double>{0.4393, 0.3544, 0.2013}) == doctest::Approx(0.3317).epsilon(1e-4));
  CHECK(map3(std::vector<double>{0, 0, 0.9}) == doctest::Approx(0.3));
  CHECK_THROWS(map3(std::vector<double>{1, 1}));
}

TEST_CASE("evaluate") {
  SUBCASE("orthogonal identities with identical descriptors score 1 everywhere") {
    DescriptorSet set;
    set.features = Matrix::Zero(16, 4);
    for (int id = 0; id < 4; ++id) {
      for (int k = 0; k < 4; ++k) {
        set.features(id * 4 + k, id) = 1.0;
        set.meta.push_back(meta("t" + std::to_string(id * 4 + k), id + 1,
                                k % 2 ? Platform::kAerial : Platform::kGround, 1 + k / 2));
      }
    }
    const auto r = evaluate(set);
    for (const auto& p : r.protocols) {
      CHECK(p.available);
      CHECK(p.metrics.map == 1.0);
    }
    REQUIRE(r.map3.has_value());
    CHECK(*r.map3 == 1.0);
  }
  SUBCASE("random descriptors sit near the chance baseline") {
    // 16 identities, 4 tracklets per platform each; chance AP is simulated by shuffling.
    double got = 0, chance = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Rng rng(seed);
      DescriptorSet set;
      set.features = testing::random_matrix(rng, 128, 32);
      for (int i = 0; i < 128; ++i) {
        set.meta.push_back(meta(std::to_string(i), i / 8, i % 2 ? Platform::kAerial : Platform::kGround, 1));
      }
      got += evaluate(set).protocols[0].metrics.map / 3;
      std::vector<int> gid;
      for (int i = 0; i < 64; ++i) gid.push_back(i / 4);
      Matrix d(64, 64);
      for (Eigen::Index q = 0; q < 64; ++q) {
        std::vector<double> perm(64);
        std::iota(perm.begin(), perm.end(), 0.0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (Eigen::Index g = 0; g < 64; ++g) d(q, g) = perm[static_cast<std::size_t>(g)];
      }
      chance += brute_force(d, gid, gid).map / 3;
    }
    CHECK(std::abs(got - chance) < 0.05);
    CHECK(got < 0.25);
  }
}

TEST_CASE("report formats") {
  DescriptorSet set;
  set.features = Matrix::Identity(4, 4);
  set.meta = {meta("a", 1, Platform::kAerial, 1), meta("b", 1, Platform::kGround, 1), meta("c", 1, Platform::kAerial, 2),
              meta("d", 2, Platform::kGround, 2)};
  const auto r = evaluate(set);
  std::ostringstream table, machine;
  print_report(table, r);
  print_machine(machine, r);
  CHECK(table.str().find("mAP-3") != std::string::npos);
  std::istringstream lines(machine.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string a, b, c, extra;
    fields >> a >> b >> c;
    CHECK_FALSE(c.empty());
    CHECK_FALSE(static_cast<bool>(fields >> extra));
    ++n;
  }
  CHECK(n >= 3);
}

TEST_CASE("embedding file") {
  Rng rng(5);
  DescriptorSet set;
  set.features = testing::random_matrix(rng, 5, 7).cast<float>().cast<double>();
  for (int i = 0; i < 5; ++i) {
    set.meta.push_back(meta("trk_" + std::to_string(i), i + 1, i % 2 ? Platform::kAerial : Platform::kGround, 1 + i % 2));
  }
  const auto path = temp_file("round_trip.sasd");
  write_embeddings(set, path);

  SUBCASE("round trip") {
    const auto back = read_embeddings(path);
    CHECK(back.features == set.features);
    CHECK(back.meta == set.meta);
  }
  SUBCASE("header layout") {
    std::ifstream in(path, std::ios::binary);
    char magic[4];
    std::uint32_t count = 0, dim = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&count), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    CHECK(std::string(magic, 4) == "SASD");
    CHECK(count == 5);
    CHECK(dim == 7);
    CHECK(std::filesystem::file_size(path) > 12 + 5 * 7 * 4);
  }
  SUBCASE("corrupt magic names byte offset 0") {
    {
      std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(1);
      f.put('X');
    }
    try {
      read_embeddings(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
    }
  }
  SUBCASE("zero dimension names its offset") {
    {
      std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(8);
      const std::uint32_t zero = 0;
      f.write(reinterpret_cast<const char*>(&zero), 4);
    }
    try {
      read_embeddings(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("byte offset 8") != std::string::npos);
    }
  }
  SUBCASE("truncated trailer is rejected") {
    std::filesystem::resize_file(path, 12 + 5 * 7 * 4 + 3);
    CHECK_THROWS_AS(read_embeddings(path), DataError);
  }
  std::filesystem::remove(path);
}
