#pragma once

// Samples, domains and datasets; the CAKEFEAT binary format, CSV import and
// the seeded synthetic multi-domain corpus generator.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cake/numerics.hpp"

namespace cake {

inline constexpr std::size_t kNumEmotions = 7;

// Order and indices are part of the file format; never reorder.
enum class EmotionClass : std::uint8_t {
  neutral = 0,
  happiness = 1,
  sad = 2,
  surprise = 3,
  fear = 4,
  disgust = 5,
  anger = 6,
};

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "neutral", "happiness", "sad", "surprise", "fear", "disgust", "anger"};

inline std::string_view emotion_name(EmotionClass c) {
  return kEmotionNames.at(static_cast<std::size_t>(c));
}

inline std::optional<EmotionClass> emotion_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == name) return static_cast<EmotionClass>(i);
  }
  return std::nullopt;
}

inline std::size_t index_of(EmotionClass c) { return static_cast<std::size_t>(c); }

struct ArousalValence {
  double arousal = 0.0;
  double valence = 0.0;
  friend bool operator==(const ArousalValence&, const ArousalValence&) = default;
};

struct FeatureRecord {
  std::string id;
  std::uint32_t domain_id = 0;
  Vec64 features;
  EmotionClass label = EmotionClass::neutral;
  std::optional<ArousalValence> av;
  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

struct DomainMeta {
  std::uint32_t domain_id = 0;
  std::string name;
  std::uint64_t n_total = 0;
  std::array<std::uint64_t, kNumEmotions> class_counts{};
  friend bool operator==(const DomainMeta&, const DomainMeta&) = default;
};

enum class Split : std::uint8_t { train, test };

struct DatasetBundle {
  std::uint32_t dim = 512;
  std::vector<DomainMeta> domains;
  std::vector<FeatureRecord> records;
  Split split = Split::train;

  std::size_t n_domains() const { return domains.size(); }
  bool has_all_av() const {
    for (const auto& r : records) {
      if (!r.av) return false;
    }
    return true;
  }
  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

using ClassCounts = std::array<std::uint64_t, kNumEmotions>;

inline std::vector<ClassCounts> class_counts(const DatasetBundle& bundle) {
  std::vector<ClassCounts> counts(bundle.domains.size(), ClassCounts{});
  for (const auto& r : bundle.records) {
    if (r.domain_id >= counts.size()) {
      throw Error("datamodel", "record '" + r.id + "' references unknown domain " +
                                   std::to_string(r.domain_id));
    }
    ++counts[r.domain_id][index_of(r.label)];
  }
  return counts;
}

inline bool av_in_range(const ArousalValence& av) {
  return std::abs(av.arousal) <= 1.0 && std::abs(av.valence) <= 1.0;
}

// Recomputes N_total and class counts of every domain from the records.
inline void refresh_domain_counts(DatasetBundle& bundle) {
  const auto counts = class_counts(bundle);
  for (std::size_t j = 0; j < bundle.domains.size(); ++j) {
    bundle.domains[j].class_counts = counts[j];
    std::uint64_t n = 0;
    for (auto c : counts[j]) n += c;
    bundle.domains[j].n_total = n;
  }
}

inline void validate_bundle(const DatasetBundle& bundle) {
  for (std::size_t j = 0; j < bundle.domains.size(); ++j) {
    if (bundle.domains[j].domain_id != j) {
      throw Error("datamodel", "domain ids must be dense 0..n-1, got " +
                                   std::to_string(bundle.domains[j].domain_id) + " at position " +
                                   std::to_string(j));
    }
  }
  const auto counts = class_counts(bundle);
  for (const auto& r : bundle.records) {
    if (r.features.size() != bundle.dim) {
      throw Error("datamodel", "record '" + r.id + "' has " + std::to_string(r.features.size()) +
                                   " features, bundle declares " + std::to_string(bundle.dim));
    }
    if (index_of(r.label) >= kNumEmotions) {
      throw Error("datamodel", "record '" + r.id + "' has out-of-range label");
    }
    if (r.av && !av_in_range(*r.av)) {
      throw Error("datamodel", "record '" + r.id + "' has arousal/valence outside [-1, 1]");
    }
  }
  for (std::size_t j = 0; j < bundle.domains.size(); ++j) {
    std::uint64_t n = 0;
    for (auto c : counts[j]) n += c;
    if (n != bundle.domains[j].n_total || counts[j] != bundle.domains[j].class_counts) {
      throw Error("datamodel", "domain '" + bundle.domains[j].name +
                                   "' counts disagree with its records");
    }
  }
}

// ---------------------------------------------------------------------------
// Binary feature file (little-endian):
//   "CAKEFEAT" | version u32 | D u32 | n_domains u32
//   per domain:  name_len u16 | name bytes | N_total u64
//   n_records u64
//   per record:  id_len u16 | id bytes | domain_id u32 | label u8 |
//                av_present u8 | arousal f32 | valence f32 | D x f32
// ---------------------------------------------------------------------------

inline constexpr std::string_view kFeatureMagic = "CAKEFEAT";
inline constexpr std::uint32_t kFeatureVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void le(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u8(std::uint8_t v) { le(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str16(const std::string& s, std::string_view module) {
    if (s.size() > 0xffff) throw Error(std::string(module), "string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string module) : data_(std::move(data)), module_(std::move(module)) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw Error(module_, what + " at byte offset " + std::to_string(at));
  }

  std::string_view take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) fail(std::string("truncated payload reading ") + what, pos_);
    std::string_view v(data_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  template <typename U>
  U le(const char* what) {
    auto s = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return v;
  }
  std::uint8_t u8(const char* w) { return le<std::uint8_t>(w); }
  std::uint16_t u16(const char* w) { return le<std::uint16_t>(w); }
  std::uint32_t u32(const char* w) { return le<std::uint32_t>(w); }
  std::uint64_t u64(const char* w) { return le<std::uint64_t>(w); }
  float f32(const char* w) { return std::bit_cast<float>(le<std::uint32_t>(w)); }
  double f64(const char* w) { return std::bit_cast<double>(le<std::uint64_t>(w)); }
  std::string str16(const char* w) {
    const auto n = u16(w);
    return std::string(take(n, w));
  }

 private:
  std::string data_;
  std::string module_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path, std::string_view module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(std::string(module), "cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes, std::string_view module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(std::string(module), "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(std::string(module), "write failed for '" + path + "'");
}

}  // namespace detail

inline std::string encode_feature_file(const DatasetBundle& bundle) {
  validate_bundle(bundle);
  detail::ByteWriter w;
  w.bytes(kFeatureMagic.data(), kFeatureMagic.size());
  w.u32(kFeatureVersion);
  w.u32(bundle.dim);
  w.u32(static_cast<std::uint32_t>(bundle.domains.size()));
  for (const auto& d : bundle.domains) {
    w.str16(d.name, "datamodel");
    w.u64(d.n_total);
  }
  w.u64(bundle.records.size());
  for (const auto& r : bundle.records) {
    w.str16(r.id, "datamodel");
    w.u32(r.domain_id);
    w.u8(static_cast<std::uint8_t>(r.label));
    w.u8(r.av ? 1 : 0);
    w.f32(r.av ? static_cast<float>(r.av->arousal) : 0.0f);
    w.f32(r.av ? static_cast<float>(r.av->valence) : 0.0f);
    for (double x : r.features) w.f32(static_cast<float>(x));
  }
  return w.buffer();
}

inline DatasetBundle decode_feature_file(std::string bytes, Split split = Split::train) {
  detail::ByteReader rd(std::move(bytes), "datamodel");
  if (rd.take(kFeatureMagic.size(), "magic") != kFeatureMagic) rd.fail("magic mismatch", 0);
  const std::size_t version_at = rd.offset();
  if (const auto v = rd.u32("version"); v != kFeatureVersion) {
    rd.fail("unsupported format version " + std::to_string(v), version_at);
  }
  DatasetBundle b;
  b.split = split;
  b.dim = rd.u32("feature dimension");
  const auto n_domains = rd.u32("domain count");
  for (std::uint32_t j = 0; j < n_domains; ++j) {
    DomainMeta m;
    m.domain_id = j;
    m.name = rd.str16("domain name");
    m.n_total = rd.u64("domain N_total");
    b.domains.push_back(std::move(m));
  }
  const auto n_records = rd.u64("record count");
  for (std::uint64_t i = 0; i < n_records; ++i) {
    const std::size_t at = rd.offset();
    FeatureRecord r;
    r.id = rd.str16("record id");
    const std::size_t dom_at = rd.offset();
    r.domain_id = rd.u32("domain id");
    if (r.domain_id >= n_domains) {
      rd.fail("record " + std::to_string(i) + " references unknown domain " + std::to_string(r.domain_id), dom_at);
    }
    const std::size_t label_at = rd.offset();
    const auto label = rd.u8("label");
    if (label >= kNumEmotions) {
      rd.fail("record " + std::to_string(i) + " has out-of-range label " + std::to_string(label), label_at);
    }
    r.label = static_cast<EmotionClass>(label);
    const auto av_present = rd.u8("av flag");
    const std::size_t av_at = rd.offset();
    const double arousal = rd.f32("arousal");
    const double valence = rd.f32("valence");
    if (av_present > 1) rd.fail("record " + std::to_string(i) + " has invalid av flag", av_at - 1);
    if (av_present) {
      r.av = ArousalValence{arousal, valence};
      if (!av_in_range(*r.av)) {
        rd.fail("record " + std::to_string(i) + " has arousal/valence outside [-1, 1]", av_at);
      }
    }
    r.features.resize(b.dim);
    for (auto& x : r.features) {
      x = rd.f32("features");
      if (!std::isfinite(x)) rd.fail("record " + std::to_string(i) + " has a non-finite feature", at);
    }
    b.records.push_back(std::move(r));
  }
  if (!rd.at_end()) rd.fail("trailing bytes after last record", rd.offset());

  const auto counts = class_counts(b);
  for (std::size_t j = 0; j < b.domains.size(); ++j) {
    std::uint64_t n = 0;
    for (auto c : counts[j]) n += c;
    if (n != b.domains[j].n_total) {
      throw Error("datamodel", "domain '" + b.domains[j].name + "' header declares " +
                                   std::to_string(b.domains[j].n_total) + " records, file holds " +
                                   std::to_string(n));
    }
    b.domains[j].class_counts = counts[j];
  }
  return b;
}

inline DatasetBundle load_feature_file(const std::string& path, Split split = Split::train) {
  return decode_feature_file(detail::read_file(path, "datamodel"), split);
}

inline void write_feature_file(const DatasetBundle& bundle, const std::string& path) {
  detail::write_file(path, encode_feature_file(bundle), "datamodel");
}

// CSV import. Header: id,domain,label,arousal,valence,f0..f{D-1}. The domain
// column holds a name; ids are assigned by first appearance. Labels may be
// indices or emotion names. Empty arousal and valence cells mean "no AV".
inline DatasetBundle import_feature_csv(std::istream& in, Split split = Split::train) {
  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error("datamodel", "csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  const std::vector<std::string> fixed = {"id", "domain", "label", "arousal", "valence"};
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    throw Error("datamodel", "csv: header must start with id,domain,label,arousal,valence");
  }
  DatasetBundle b;
  b.split = split;
  b.dim = static_cast<std::uint32_t>(header.size() - fixed.size());
  for (std::uint32_t k = 0; k < b.dim; ++k) {
    if (header[fixed.size() + k] != "f" + std::to_string(k)) {
      throw Error("datamodel", "csv: expected column f" + std::to_string(k));
    }
  }
  std::map<std::string, std::uint32_t> domain_ids;
  auto to_double = [](const std::string& s, std::size_t line_no) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != s.size()) {
      throw Error("datamodel", "csv line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
    return v;
  };
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw Error("datamodel", "csv line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
    }
    FeatureRecord r;
    r.id = cells[0];
    auto [it, inserted] = domain_ids.try_emplace(cells[1], static_cast<std::uint32_t>(domain_ids.size()));
    if (inserted) b.domains.push_back(DomainMeta{it->second, cells[1], 0, {}});
    r.domain_id = it->second;
    if (auto named = emotion_from_name(cells[2])) {
      r.label = *named;
    } else {
      const double v = to_double(cells[2], line_no);
      if (v < 0 || v >= kNumEmotions || v != std::floor(v)) {
        throw Error("datamodel", "csv line " + std::to_string(line_no) + ": label out of range");
      }
      r.label = static_cast<EmotionClass>(static_cast<int>(v));
    }
    if (cells[3].empty() != cells[4].empty()) {
      throw Error("datamodel", "csv line " + std::to_string(line_no) + ": arousal and valence must both be set or both empty");
    }
    if (!cells[3].empty()) {
      r.av = ArousalValence{to_double(cells[3], line_no), to_double(cells[4], line_no)};
      if (!av_in_range(*r.av)) {
        throw Error("datamodel", "csv line " + std::to_string(line_no) + ": arousal/valence outside [-1, 1]");
      }
    }
    r.features.resize(b.dim);
    for (std::uint32_t k = 0; k < b.dim; ++k) r.features[k] = to_double(cells[fixed.size() + k], line_no);
    b.records.push_back(std::move(r));
  }
  refresh_domain_counts(b);
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::uint32_t n_domains = 3;
  std::uint32_t n_classes = 7;
  std::uint32_t dim = 64;
  std::uint32_t latent_dim = 3;
  // One latent point per class; drawn as N(0, prototype_scale^2 I) when empty.
  std::vector<Vec64> prototypes;
  double prototype_scale = 1.0;
  double noise_sigma = 0.3;
  double shift_sigma = 0.1;
  double av_noise = 0.05;
  // Per-domain relative class frequencies; uniform when empty.
  std::vector<Vec64> imbalance;
  std::vector<std::uint64_t> train_counts = {1000, 300, 100};
  std::vector<std::uint64_t> test_counts = {300, 150, 50};
  std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& cfg) {
  auto bad = [](const std::string& what) { throw Error("datamodel", "invalid synth config: " + what); };
  if (cfg.n_domains == 0) bad("n_domains must be > 0");
  if (cfg.n_classes == 0 || cfg.n_classes > kNumEmotions) bad("n_classes must be in 1..7");
  if (cfg.latent_dim == 0 || cfg.latent_dim > cfg.dim) bad("need 1 <= latent_dim <= dim");
  if (!(cfg.noise_sigma >= 0) || !(cfg.shift_sigma >= 0) || !(cfg.av_noise >= 0)) bad("sigmas must be >= 0");
  if (!(cfg.prototype_scale > 0)) bad("prototype_scale must be > 0");
  if (cfg.train_counts.size() != cfg.n_domains || cfg.test_counts.size() != cfg.n_domains) {
    bad("train/test counts must list one value per domain");
  }
  for (auto c : cfg.train_counts) {
    if (c == 0) bad("train counts must be > 0");
  }
  for (auto c : cfg.test_counts) {
    if (c == 0) bad("test counts must be > 0");
  }
  if (!cfg.prototypes.empty()) {
    if (cfg.prototypes.size() != cfg.n_classes) bad("need one prototype per class");
    for (const auto& p : cfg.prototypes) {
      if (p.size() != cfg.latent_dim) bad("prototype length must equal latent_dim");
    }
  }
  if (!cfg.imbalance.empty()) {
    if (cfg.imbalance.size() != cfg.n_domains) bad("imbalance needs one ratio list per domain");
    for (const auto& r : cfg.imbalance) {
      if (r.size() != cfg.n_classes) bad("imbalance ratio list length must equal n_classes");
      double s = 0;
      for (double x : r) {
        if (!(x >= 0)) bad("imbalance ratios must be >= 0");
        s += x;
      }
      if (!(s > 0)) bad("imbalance ratios must not all be zero");
    }
  }
}

struct SynthCorpus {
  DatasetBundle train;
  DatasetBundle test;
};

// Each record: z = prototype[label] + shift[domain] + noise, x = A z with a
// fixed random D x L lift A. Features are rounded to float so the bundle
// survives the f32 file format unchanged. AV is tanh of the first two
// prototype coordinates plus noise, clipped to [-1, 1].
inline SynthCorpus synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  SeededRng rng(cfg.seed);
  const std::size_t L = cfg.latent_dim;
  const std::size_t D = cfg.dim;

  std::vector<Vec64> protos = cfg.prototypes;
  if (protos.empty()) {
    protos.assign(cfg.n_classes, Vec64(L));
    for (auto& p : protos) {
      for (double& x : p) x = cfg.prototype_scale * rng.next_gaussian();
    }
  }
  Mat64 lift(D, L);
  for (double& x : lift.flat()) x = rng.next_gaussian() / std::sqrt(static_cast<double>(L));
  std::vector<Vec64> shifts(cfg.n_domains, Vec64(L));
  for (auto& s : shifts) {
    for (double& x : s) x = cfg.shift_sigma * rng.next_gaussian();
  }
  // Categorical sampling tables; last_positive absorbs rounding at the tail.
  std::vector<Vec64> cumulative(cfg.n_domains);
  std::vector<std::size_t> last_positive(cfg.n_domains, 0);
  for (std::uint32_t j = 0; j < cfg.n_domains; ++j) {
    const Vec64 ratios = cfg.imbalance.empty() ? Vec64(cfg.n_classes, 1.0) : cfg.imbalance[j];
    double total = 0;
    for (double r : ratios) total += r;
    double acc = 0;
    for (std::size_t c = 0; c < ratios.size(); ++c) {
      acc += ratios[c] / total;
      cumulative[j].push_back(acc);
      if (ratios[c] > 0) last_positive[j] = c;
    }
  }

  auto make_bundle = [&](Split split, const std::vector<std::uint64_t>& counts) {
    DatasetBundle b;
    b.dim = cfg.dim;
    b.split = split;
    for (std::uint32_t j = 0; j < cfg.n_domains; ++j) {
      b.domains.push_back(DomainMeta{j, "domain" + std::to_string(j), 0, {}});
    }
    const std::string tag = split == Split::train ? "train" : "test";
    for (std::uint32_t j = 0; j < cfg.n_domains; ++j) {
      for (std::uint64_t i = 0; i < counts[j]; ++i) {
        const double u = rng.next_double();
        std::size_t label = last_positive[j];
        for (std::size_t c = 0; c < cfg.n_classes; ++c) {
          if (u < cumulative[j][c]) {
            label = c;
            break;
          }
        }
        Vec64 z(L);
        for (std::size_t l = 0; l < L; ++l) {
          z[l] = protos[label][l] + shifts[j][l] + cfg.noise_sigma * rng.next_gaussian();
        }
        FeatureRecord r;
        r.id = "d" + std::to_string(j) + "-" + tag + "-" + std::to_string(i);
        r.domain_id = j;
        r.label = static_cast<EmotionClass>(label);
        r.features.resize(D);
        for (std::size_t d = 0; d < D; ++d) {
          r.features[d] = static_cast<float>(dot(lift.row(d), z));
        }
        const double a = std::tanh(protos[label][0]) + cfg.av_noise * rng.next_gaussian();
        const double v = (L >= 2 ? std::tanh(protos[label][1]) : 0.0) + cfg.av_noise * rng.next_gaussian();
        r.av = ArousalValence{static_cast<float>(std::clamp(a, -1.0, 1.0)),
                              static_cast<float>(std::clamp(v, -1.0, 1.0))};
        b.records.push_back(std::move(r));
      }
    }
    refresh_domain_counts(b);
    return b;
  };

  SynthCorpus out;
  out.train = make_bundle(Split::train, cfg.train_counts);
  out.test = make_bundle(Split::test, cfg.test_counts);
  return out;
}

}  // namespace cake
