#include "sasreid/eval.hpp"

#include "sasreid/errors.hpp"
#include "sasreid/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sasreid::eval {

RowVector fuse_descriptor(const RowVector& v, const RowVector& h_m, const RowVector& f_s) {
  auto unit = [](const RowVector& x, bool allow_zero, const char* name) -> RowVector {
    const double n = x.norm();
    if (!std::isfinite(n)) throw std::invalid_argument(std::string("fuse_descriptor: non-finite ") + name);
    if (n == 0.0) {
      if (allow_zero) return x;
      throw std::invalid_argument(std::string("fuse_descriptor: zero-norm ") + name);
    }
    return x / n;
  };
  RowVector e(v.cols() + h_m.cols() + f_s.cols());
  e << unit(v, false, "v"), unit(h_m, false, "h_M"), unit(f_s, true, "f_S");
  return e;
}

Matrix distance_matrix(const Matrix& queries, const Matrix& gallery) {
  if (queries.cols() != gallery.cols()) throw std::invalid_argument("distance_matrix: dimension mismatch");
  auto normalize = [](const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double n = out.row(i).norm();
      if (n > 0.0) out.row(i) /= n;
    }
    return out;
  };
  Matrix sim = normalize(queries) * normalize(gallery).transpose();
  return (1.0 - sim.array()).matrix();
}

std::vector<Protocol> standard_protocols() {
  return {{"A->G", Platform::kAerial, Platform::kGround},
          {"G->A", Platform::kGround, Platform::kAerial},
          {"A->A", Platform::kAerial, Platform::kAerial}};
}

ProtocolSplit protocol_filter(std::span<const DescriptorMeta> meta, const Protocol& protocol) {
  ProtocolSplit s;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (meta[i].platform == protocol.query) s.queries.push_back(i);
    if (meta[i].platform == protocol.gallery) s.gallery.push_back(i);
  }
  if (s.queries.empty()) throw std::invalid_argument(protocol.name + ": empty query set");
  if (s.gallery.empty()) throw std::invalid_argument(protocol.name + ": empty gallery set");
  return s;
}

double RetrievalMetrics::cmc_at(int k) const {
  if (cmc.empty()) return 0.0;
  return cmc[static_cast<std::size_t>(std::clamp(k, 1, static_cast<int>(cmc.size())) - 1)];
}

RetrievalMetrics cmc_map(const Matrix& dist, std::span<const int> query_ids, std::span<const int> gallery_ids,
                         const std::function<bool(std::size_t, std::size_t)>& exclude) {
  if (dist.rows() != static_cast<Eigen::Index>(query_ids.size()) ||
      dist.cols() != static_cast<Eigen::Index>(gallery_ids.size())) {
    throw std::invalid_argument("cmc_map: distance matrix does not match metadata");
  }
  const std::size_t n_g = gallery_ids.size();
  RetrievalMetrics m;
  m.cmc.assign(n_g, 0.0);
  std::vector<std::size_t> order(n_g);
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto row = dist.row(static_cast<Eigen::Index>(q));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return row(static_cast<Eigen::Index>(a)) < row(static_cast<Eigen::Index>(b));
    });
    int rank = 0;
    int hits = 0;
    int first_hit = -1;
    double precision_sum = 0.0;
    for (std::size_t g : order) {
      if (exclude && exclude(q, g)) continue;
      ++rank;
      if (gallery_ids[g] == query_ids[q]) {
        ++hits;
        precision_sum += static_cast<double>(hits) / rank;
        if (first_hit < 0) first_hit = rank;
      }
    }
    if (hits == 0) {
      ++m.dropped_queries;
      continue;
    }
    ++m.retained_queries;
    ap_sum += precision_sum / hits;
    for (std::size_t k = static_cast<std::size_t>(first_hit - 1); k < n_g; ++k) m.cmc[k] += 1.0;
  }
  if (m.retained_queries > 0) {
    m.map = ap_sum / m.retained_queries;
    for (auto& c : m.cmc) c /= m.retained_queries;
  }
  return m;
}

double map3(std::span<const double> maps) {
  if (maps.size() != 3) throw std::invalid_argument("map3: expected exactly three protocol results");
  return (maps[0] + maps[1] + maps[2]) / 3.0;
}

RankingResult evaluate(const DescriptorSet& set) {
  RankingResult result;
  std::vector<double> maps;
  for (const auto& protocol : standard_protocols()) {
    ProtocolResult pr;
    pr.name = protocol.name;
    try {
      const ProtocolSplit split = protocol_filter(set.meta, protocol);
      Matrix q(static_cast<Eigen::Index>(split.queries.size()), set.features.cols());
      Matrix g(static_cast<Eigen::Index>(split.gallery.size()), set.features.cols());
      std::vector<int> qid, gid;
      for (std::size_t i = 0; i < split.queries.size(); ++i) {
        q.row(static_cast<Eigen::Index>(i)) = set.features.row(static_cast<Eigen::Index>(split.queries[i]));
        qid.push_back(set.meta[split.queries[i]].identity);
      }
      for (std::size_t i = 0; i < split.gallery.size(); ++i) {
        g.row(static_cast<Eigen::Index>(i)) = set.features.row(static_cast<Eigen::Index>(split.gallery[i]));
        gid.push_back(set.meta[split.gallery[i]].identity);
      }
      auto self_match = [&](std::size_t qi, std::size_t gi) { return split.queries[qi] == split.gallery[gi]; };
      pr.metrics = cmc_map(distance_matrix(q, g), qid, gid, self_match);
      pr.available = pr.metrics.retained_queries > 0;
      if (!pr.available) pr.reason = "no query has a matching gallery entry";
    } catch (const std::invalid_argument& e) {
      pr.available = false;
      pr.reason = e.what();
    }
    if (pr.available) maps.push_back(pr.metrics.map);
    result.protocols.push_back(std::move(pr));
  }
  if (maps.size() == 3) result.map3 = map3(maps);
  return result;
}

void print_report(std::ostream& os, const RankingResult& result) {
  os << std::left << std::setw(8) << "Protocol" << std::right << std::setw(8) << "mAP" << std::setw(8) << "R1"
     << std::setw(8) << "R5" << std::setw(8) << "R10" << std::setw(9) << "queries" << std::setw(9) << "dropped"
     << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& p : result.protocols) {
    os << std::left << std::setw(8) << p.name << std::right;
    if (p.available) {
      os << std::setw(8) << 100.0 * p.metrics.map << std::setw(8) << 100.0 * p.metrics.cmc_at(1) << std::setw(8)
         << 100.0 * p.metrics.cmc_at(5) << std::setw(8) << 100.0 * p.metrics.cmc_at(10);
    } else {
      os << std::setw(8) << "n/a" << std::setw(8) << "n/a" << std::setw(8) << "n/a" << std::setw(8) << "n/a";
    }
    os << std::setw(9) << p.metrics.retained_queries << std::setw(9) << p.metrics.dropped_queries << '\n';
  }
  os << std::left << std::setw(8) << "mAP-3" << std::right << std::setw(8);
  if (result.map3) {
    os << 100.0 * *result.map3;
  } else {
    os << "n/a";
  }
  os << '\n';
  os.unsetf(std::ios::floatfield);
}

void print_machine(std::ostream& os, const RankingResult& result) {
  os << std::setprecision(10);
  for (const auto& p : result.protocols) {
    if (p.available) {
      os << p.name << " mAP " << p.metrics.map << '\n';
      os << p.name << " R1 " << p.metrics.cmc_at(1) << '\n';
      os << p.name << " R5 " << p.metrics.cmc_at(5) << '\n';
      os << p.name << " R10 " << p.metrics.cmc_at(10) << '\n';
    } else {
      os << p.name << " mAP n/a\n";
    }
    os << p.name << " dropped " << p.metrics.dropped_queries << '\n';
  }
  if (result.map3) {
    os << "all mAP-3 " << *result.map3 << '\n';
  } else {
    os << "all mAP-3 n/a\n";
  }
}

void write_embeddings(const DescriptorSet& set, const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(set.meta.size()) != set.features.rows()) {
    throw std::invalid_argument("write_embeddings: metadata count does not match rows");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write("SASD", 4);
  io::write_u32(out, static_cast<std::uint32_t>(set.features.rows()));
  io::write_u32(out, static_cast<std::uint32_t>(set.features.cols()));
  for (Eigen::Index i = 0; i < set.features.size(); ++i) io::write_f32(out, static_cast<float>(set.features.data()[i]));
  for (const auto& m : set.meta) {
    out << m.tracklet_id << ' ' << m.identity << ' ' << synth::to_string(m.platform) << ' ' << m.session << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

DescriptorSet read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings: " + path.string());
  io::ByteReader r(in, path.string());
  const std::string magic = r.bytes(4);
  if (magic != "SASD") throw DataError(path.string() + ": bad magic at byte offset 0");
  const std::uint32_t count = r.u32();
  const std::uint64_t dim_offset = r.offset();
  const std::uint32_t dim = r.u32();
  if (dim == 0 && count > 0) throw DataError(path.string() + ": zero dimension at byte offset " + std::to_string(dim_offset));
  DescriptorSet set;
  set.features.resize(count, dim);
  for (Eigen::Index i = 0; i < set.features.size(); ++i) set.features.data()[i] = r.f32();

  std::string line;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t at = r.offset();
    if (!std::getline(in, line)) {
      throw DataError(path.string() + ": metadata trailer ends at byte offset " + std::to_string(at) + " after " +
                      std::to_string(i) + " of " + std::to_string(count) + " records");
    }
    r.advance(line.size() + 1);
    std::istringstream ss(line);
    DescriptorMeta m;
    std::string platform;
    std::string extra;
    if (!(ss >> m.tracklet_id >> m.identity >> platform >> m.session) || (ss >> extra) ||
        (m.session != 1 && m.session != 2)) {
      throw DataError(path.string() + ": malformed metadata record at byte offset " + std::to_string(at));
    }
    try {
      m.platform = synth::parse_platform(platform);
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what() + " at byte offset " + std::to_string(at));
    }
    set.meta.push_back(std::move(m));
  }
  return set;
}

}  // namespace sasreid::eval
