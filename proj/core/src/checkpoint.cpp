#include "sasreid/checkpoint.hpp"

#include "sasreid/errors.hpp"
#include "sasreid/io.hpp"

#include <fstream>

namespace sasreid::checkpoint {

void write_tensors(std::span<const NamedTensor> tensors, const std::filesystem::path& path, Precision precision) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write("SASC", 4);
  io::write_u32(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(precision));
  io::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    io::write_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    io::write_u32(out, 2);
    io::write_u32(out, static_cast<std::uint32_t>(t.value.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      if (precision == Precision::kFloat32) {
        io::write_f32(out, static_cast<float>(t.value.data()[i]));
      } else {
        io::write_f64(out, t.value.data()[i]);
      }
    }
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  io::ByteReader r(in, path.string());
  if (r.bytes(4) != "SASC") throw DataError(path.string() + ": bad checkpoint magic at byte offset 0");
  const std::uint32_t version = r.u32();
  if (version != 1) throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t width = r.u32();
  if (width != 4 && width != 8) throw DataError(path.string() + ": bad element width at byte offset 8");
  const std::uint32_t count = r.u32();

  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t len = r.u32();
    if (len > 4096) throw DataError(path.string() + ": implausible name length at byte offset " + std::to_string(r.offset() - 4));
    t.name = r.bytes(len);
    const std::uint32_t ndim = r.u32();
    std::vector<std::uint32_t> dims(ndim);
    for (auto& d : dims) d = r.u32();
    Eigen::Index rows = 1, cols = 1;
    if (ndim == 1) {
      cols = dims[0];
    } else if (ndim == 2) {
      rows = dims[0];
      cols = dims[1];
    } else if (ndim != 0) {
      throw DataError(path.string() + ": tensor '" + t.name + "' has unsupported rank " + std::to_string(ndim));
    }
    t.value.resize(rows, cols);
    for (Eigen::Index k = 0; k < t.value.size(); ++k) t.value.data()[k] = width == 4 ? r.f32() : r.f64();
    out.push_back(std::move(t));
  }
  return out;
}

const NamedTensor* find(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void load_into(std::span<const nn::NamedParam> params, std::span<const NamedTensor> tensors) {
  for (const auto& p : params) {
    const NamedTensor* t = find(tensors, p.name);
    if (!t) throw DataError("checkpoint is missing parameter '" + p.name + "'");
    if (t->value.rows() != p.var.rows() || t->value.cols() != p.var.cols()) {
      throw DataError("dim mismatch for parameter '" + p.name + "': model expects " + std::to_string(p.var.rows()) +
                      "x" + std::to_string(p.var.cols()) + ", checkpoint has " + std::to_string(t->value.rows()) + "x" +
                      std::to_string(t->value.cols()));
    }
  }
  for (const auto& p : params) {
    auto v = p.var;
    v.mutable_value() = find(tensors, p.name)->value;
  }
}

std::vector<NamedTensor> snapshot(std::span<const nn::NamedParam> params, const std::string& prefix) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({prefix + p.name, p.var.value()});
  return out;
}

}  // namespace sasreid::checkpoint
