#pragma once

// Descriptor fusion, cross-platform retrieval protocols, CMC / mAP / mAP-3,
// and the SASD embedding file.

#include "sasreid/autograd.hpp"
#include "sasreid/synth.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sasreid::eval {

using ag::Matrix;
using ag::RowVector;
using synth::Platform;

struct DescriptorMeta {
  std::string tracklet_id;
  int identity = 0;
  Platform platform = Platform::kGround;
  int session = 1;
  friend bool operator==(const DescriptorMeta&, const DescriptorMeta&) = default;
};

struct DescriptorSet {
  Matrix features;  // one row per tracklet
  std::vector<DescriptorMeta> meta;
};

/// [v/|v| , h_M/|h_M| , f_S/|f_S|]; f_S may be empty (branch disabled) and
/// passes through as zeros when its norm is zero.
RowVector fuse_descriptor(const RowVector& v, const RowVector& h_m, const RowVector& f_s);

/// 1 - cosine similarity, n_q x n_g.
Matrix distance_matrix(const Matrix& queries, const Matrix& gallery);

struct Protocol {
  std::string name;
  Platform query;
  Platform gallery;
};
/// A->G, G->A, A->A in that order.
std::vector<Protocol> standard_protocols();

struct ProtocolSplit {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> gallery;
};
/// Throws std::invalid_argument when either side is empty.
ProtocolSplit protocol_filter(std::span<const DescriptorMeta> meta, const Protocol& protocol);

struct RetrievalMetrics {
  double map = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = CMC@k, length n_g
  int retained_queries = 0;
  int dropped_queries = 0;
  double cmc_at(int k) const;
};

/// Gallery entries for which `exclude(q, g)` holds are removed from query q's
/// ranking. Queries without any positive are dropped.
RetrievalMetrics cmc_map(const Matrix& dist, std::span<const int> query_ids, std::span<const int> gallery_ids,
                         const std::function<bool(std::size_t, std::size_t)>& exclude = {});

struct ProtocolResult {
  std::string name;
  bool available = false;  // false -> reported as n/a
  std::string reason;
  RetrievalMetrics metrics;
};

struct RankingResult {
  std::vector<ProtocolResult> protocols;
  std::optional<double> map3;
};

/// Unweighted mean of the three protocol mAPs. Throws unless exactly three are given.
double map3(std::span<const double> maps);

RankingResult evaluate(const DescriptorSet& set);

void print_report(std::ostream& os, const RankingResult& result);
/// `protocol metric value` triples.
void print_machine(std::ostream& os, const RankingResult& result);

/// Magic "SASD", u32 count, u32 dim, count*dim f32 LE row-major, then one
/// `tracklet_id identity platform session` line per row.
void write_embeddings(const DescriptorSet& set, const std::filesystem::path& path);
DescriptorSet read_embeddings(const std::filesystem::path& path);

}  // namespace sasreid::eval
