#pragma once

// CAKECKPT checkpoint format (little-endian):
//   "CAKECKPT" | version u32
//   config:  variant u8 | av_source u8 | k u32 | D u32 | n_domains u32 |
//            n_classes u32 | dropout f64 | seed u64
//   tensors: count u32, then per tensor rows u32 | cols u32 | rows*cols f64
//            (vectors are stored as rows x 1), in for_each_tensor order
//   optimizer: present u8; if 1: t u64 | lr f64 | beta1 f64 | beta2 f64 |
//              eps f64 | m tensors | v tensors (same encoding, same order)

#include <optional>
#include <string>

#include "cake/datamodel.hpp"
#include "cake/model.hpp"
#include "cake/optim.hpp"

namespace cake {

inline constexpr std::string_view kCheckpointMagic = "CAKECKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<AdamState> optimizer;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_tensors(ByteWriter& w, const ParamTensors& t) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes = {
      {static_cast<std::uint32_t>(t.embed_W.rows()), static_cast<std::uint32_t>(t.embed_W.cols())},
      {static_cast<std::uint32_t>(t.embed_b.size()), 1},
      {static_cast<std::uint32_t>(t.av_W.rows()), static_cast<std::uint32_t>(t.av_W.cols())},
      {static_cast<std::uint32_t>(t.av_b.size()), 1}};
  for (std::size_t j = 0; j < t.clf_W.size(); ++j) {
    shapes.emplace_back(static_cast<std::uint32_t>(t.clf_W[j].rows()), static_cast<std::uint32_t>(t.clf_W[j].cols()));
    shapes.emplace_back(static_cast<std::uint32_t>(t.clf_b[j].size()), 1);
  }
  w.u32(static_cast<std::uint32_t>(shapes.size()));
  std::size_t i = 0;
  for_each_tensor(t, [&](std::string_view, std::span<const double> s) {
    auto [rows, cols] = shapes[i++];
    // empty matrices keep their (0, 0) shape, empty vectors become (0, 1)
    w.u32(rows);
    w.u32(cols);
    for (double x : s) w.f64(x);
  });
}

// Reads tensors into a zero-initialized layout with the expected shapes.
inline void get_tensors(ByteReader& rd, ParamTensors& t) {
  const std::size_t count_at = rd.offset();
  const auto count = rd.u32("tensor count");
  if (count != 4 + 2 * t.clf_W.size()) rd.fail("tensor count does not match the model config", count_at);
  for_each_tensor(t, [&](std::string_view name, std::span<double> s) {
    const std::size_t at = rd.offset();
    const std::uint64_t rows = rd.u32("tensor rows");
    const std::uint64_t cols = rd.u32("tensor cols");
    if (rows * cols != s.size()) rd.fail("tensor " + std::string(name) + " has unexpected shape", at);
    for (double& x : s) x = rd.f64("tensor payload");
  });
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  check_shapes(ck.params, ck.config);
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  const auto& c = ck.config;
  w.u8(static_cast<std::uint8_t>(c.variant));
  w.u8(static_cast<std::uint8_t>(c.av_source));
  w.u32(c.k);
  w.u32(c.dim);
  w.u32(c.n_domains);
  w.u32(c.n_classes);
  w.f64(c.dropout_rate);
  w.u64(c.seed);
  detail::put_tensors(w, ck.params);
  w.u8(ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    const auto& o = *ck.optimizer;
    w.u64(o.t);
    w.f64(o.hyper.lr);
    w.f64(o.hyper.beta1);
    w.f64(o.hyper.beta2);
    w.f64(o.hyper.eps);
    detail::put_tensors(w, o.m);
    detail::put_tensors(w, o.v);
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  detail::ByteReader rd(std::move(bytes), "model");
  if (rd.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic) rd.fail("checkpoint magic mismatch", 0);
  const std::size_t version_at = rd.offset();
  if (const auto v = rd.u32("version"); v != kCheckpointVersion) {
    rd.fail("unsupported checkpoint version " + std::to_string(v), version_at);
  }
  Checkpoint ck;
  auto& c = ck.config;
  const std::size_t cfg_at = rd.offset();
  const auto variant = rd.u8("variant");
  const auto av_source = rd.u8("av source");
  if (variant > 3 || av_source > 1) rd.fail("invalid variant or av source", cfg_at);
  c.variant = static_cast<Variant>(variant);
  c.av_source = static_cast<AvSource>(av_source);
  c.k = rd.u32("k");
  c.dim = rd.u32("feature dimension");
  c.n_domains = rd.u32("domain count");
  c.n_classes = rd.u32("class count");
  c.dropout_rate = rd.f64("dropout");
  c.seed = rd.u64("seed");
  try {
    validate(c);
  } catch (const Error& e) {
    rd.fail(e.what(), cfg_at);
  }
  ck.params = zeros_like<ModelParams>(init_params(c));
  detail::get_tensors(rd, ck.params);
  const std::size_t opt_at = rd.offset();
  const auto has_opt = rd.u8("optimizer flag");
  if (has_opt > 1) rd.fail("invalid optimizer flag", opt_at);
  if (has_opt) {
    AdamState o;
    o.t = rd.u64("adam step");
    o.hyper.lr = rd.f64("adam lr");
    o.hyper.beta1 = rd.f64("adam beta1");
    o.hyper.beta2 = rd.f64("adam beta2");
    o.hyper.eps = rd.f64("adam eps");
    o.m = zeros_like<ParamTensors>(ck.params);
    o.v = zeros_like<ParamTensors>(ck.params);
    detail::get_tensors(rd, o.m);
    detail::get_tensors(rd, o.v);
    ck.optimizer = std::move(o);
  }
  if (!rd.at_end()) rd.fail("trailing bytes after checkpoint", rd.offset());
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  detail::write_file(path, encode_checkpoint(ck), "model");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_file(path, "model"));
}

}  // namespace cake
