#pragma once

// Segment datasets on disk and the sampling protocols built on them.
//
// A container is two files:
//   <stem>.manifest  JSON: format_version, domain, classes, records[]
//   <stem>.f32       "SEGD", u32 version, u64 value count, f32 LE values
// Record offsets and lengths count floats from the start of the value array.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synfault/checkpoint.hpp"
#include "synfault/random.hpp"
#include "synfault/types.hpp"

namespace synfault::datastore {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr char kBlobMagic[4] = {'S', 'E', 'G', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct SampleRecord {
  std::string id;
  std::optional<FaultClass> label;
  double shaft_speed_rpm = 0.0;
  double sample_rate = 0.0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint64_t seed = 0;
  std::string source;  // recording the segment was cut from, if any
};

struct Dataset {
  DomainTag domain = DomainTag::RealTarget;
  std::vector<FaultClass> classes{kAllFaultClasses.begin(), kAllFaultClasses.end()};
  std::vector<SampleRecord> records;
  std::vector<float> values;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  void add(const Segment& s, std::string id, std::uint64_t seed = 0, std::string source = {}) {
    s.validate();
    SampleRecord r;
    r.id = std::move(id);
    r.label = s.label;
    r.shaft_speed_rpm = s.shaft_speed_rpm;
    r.sample_rate = s.sample_rate;
    r.offset = values.size();
    r.length = s.samples.size();
    r.seed = seed;
    r.source = std::move(source);
    for (double v : s.samples) values.push_back(static_cast<float>(v));
    records.push_back(std::move(r));
  }

  std::span<const float> samples(std::size_t i) const {
    const auto& r = records.at(i);
    return {values.data() + r.offset, static_cast<std::size_t>(r.length)};
  }

  Segment segment(std::size_t i) const {
    const auto& r = records.at(i);
    Segment s;
    const auto v = samples(i);
    s.samples.assign(v.begin(), v.end());
    s.sample_rate = r.sample_rate;
    s.shaft_speed_rpm = r.shaft_speed_rpm;
    s.label = r.label;
    s.domain = domain;
    return s;
  }

  std::vector<std::size_t> indices_of(FaultClass c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].label == c) out.push_back(i);
    return out;
  }

  /// Offsets in bounds and non-overlapping; labels from the class list.
  void validate() const {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (const auto& r : records) {
      if (r.length > values.size() || r.offset > values.size() - r.length)
        throw FormatError("record " + r.id + " points past the end of the sample blob");
      if (r.label && std::find(classes.begin(), classes.end(), *r.label) == classes.end())
        throw FormatError("record " + r.id + " has a label outside the class list");
      spans.emplace_back(r.offset, r.offset + r.length);
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].first < spans[i - 1].second) throw FormatError("manifest records overlap");
  }
};

/// Copies the listed records (in that order) into a new dataset.
inline Dataset select(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.domain = ds.domain;
  out.classes = ds.classes;
  for (std::size_t i : idx) {
    SampleRecord r = ds.records.at(i);
    const auto v = ds.samples(i);
    r.offset = out.values.size();
    out.values.insert(out.values.end(), v.begin(), v.end());
    out.records.push_back(std::move(r));
  }
  return out;
}

inline Dataset without_labels(Dataset ds) {
  for (auto& r : ds.records) r.label.reset();
  return ds;
}

// --- container ---------------------------------------------------------------

inline std::string encode_blob(std::span<const float> values) {
  std::string out(kBlobMagic, 4);
  nn::io::put_u32(out, kFormatVersion);
  nn::io::put_u64(out, values.size());
  out.reserve(out.size() + 4 * values.size());
  for (float v : values) nn::io::put_f32(out, v);
  return out;
}

inline std::vector<float> decode_blob(const std::string& bytes) {
  nn::io::Reader in(bytes, "sample blob");
  if (in.bytes(4) != std::string(kBlobMagic, 4)) throw FormatError("sample blob: bad magic");
  const auto version = in.u32();
  if (version != kFormatVersion) throw FormatError("sample blob: unsupported version " + std::to_string(version));
  const auto n = in.u64();
  if (n > in.remaining() / 4) throw FormatError("sample blob: truncated");
  std::vector<float> v(n);
  for (auto& x : v) x = in.f32();
  if (in.remaining()) throw FormatError("sample blob: trailing bytes");
  return v;
}

inline json manifest_json(const Dataset& ds) {
  json j;
  j["format_version"] = kFormatVersion;
  j["domain"] = std::string(to_string(ds.domain));
  j["classes"] = json::array();
  for (auto c : ds.classes) j["classes"].push_back(std::string(to_string(c)));
  j["records"] = json::array();
  for (const auto& r : ds.records) {
    json e{{"id", r.id},
           {"label", r.label ? json(std::string(to_string(*r.label))) : json(nullptr)},
           {"shaft_speed_rpm", r.shaft_speed_rpm},
           {"sample_rate", r.sample_rate},
           {"offset", r.offset},
           {"length", r.length},
           {"seed", r.seed}};
    if (!r.source.empty()) e["source"] = r.source;
    j["records"].push_back(std::move(e));
  }
  return j;
}

/// Manifest fields without the blob; call validate() once values are attached.
inline Dataset dataset_from_manifest(const json& j) {
  try {
    if (j.at("format_version").get<std::uint32_t>() != kFormatVersion) throw FormatError("manifest: unsupported format_version");
    Dataset ds;
    ds.domain = domain_from_string(j.at("domain").get<std::string>());
    ds.classes.clear();
    for (const auto& c : j.at("classes")) ds.classes.push_back(fault_class_from_string(c.get<std::string>()));
    for (const auto& e : j.at("records")) {
      SampleRecord r;
      r.id = e.at("id").get<std::string>();
      if (!e.at("label").is_null()) r.label = fault_class_from_string(e.at("label").get<std::string>());
      r.shaft_speed_rpm = e.at("shaft_speed_rpm").get<double>();
      r.sample_rate = e.at("sample_rate").get<double>();
      r.offset = e.at("offset").get<std::uint64_t>();
      r.length = e.at("length").get<std::uint64_t>();
      r.seed = e.value("seed", std::uint64_t{0});
      r.source = e.value("source", std::string{});
      ds.records.push_back(std::move(r));
    }
    return ds;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  } catch (const ParameterError& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

inline fs::path manifest_path(const fs::path& stem) { return fs::path(stem.string() + ".manifest"); }
inline fs::path blob_path(const fs::path& stem) { return fs::path(stem.string() + ".f32"); }

inline void save(const Dataset& ds, const fs::path& stem) {
  ds.validate();
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  nn::io::write_file(manifest_path(stem), manifest_json(ds).dump(2) + "\n");
  nn::io::write_file(blob_path(stem), encode_blob(ds.values));
}

inline Dataset load(const fs::path& stem) {
  json j;
  try {
    j = json::parse(nn::io::read_file(manifest_path(stem)));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Dataset ds = dataset_from_manifest(j);
  ds.values = decode_blob(nn::io::read_file(blob_path(stem)));
  ds.validate();
  return ds;
}

/// Headerless little-endian float32 file (converted recordings).
inline std::vector<double> load_raw_f32(const fs::path& path) {
  const auto bytes = nn::io::read_file(path);
  if (bytes.size() % 4) throw FormatError(path.string() + ": size is not a multiple of 4 bytes");
  nn::io::Reader in(bytes, path.string());
  std::vector<double> out(bytes.size() / 4);
  for (auto& v : out) v = in.f32();
  return out;
}

// --- sampling protocols ----------------------------------------------------------

/// `count` uniformly random start offsets in [0, n - seg_len]; starts may repeat
/// or overlap.
template <class R>
std::vector<std::size_t> segment_offsets(std::size_t n, std::size_t seg_len, std::size_t count, R& rng) {
  if (seg_len == 0) throw ParameterError("segment length must be positive");
  if (n < seg_len) throw ParameterError("recording of " + std::to_string(n) + " samples is shorter than a segment of " + std::to_string(seg_len));
  std::uniform_int_distribution<std::size_t> pick(0, n - seg_len);
  std::vector<std::size_t> out(count);
  for (auto& o : out) o = pick(rng);
  return out;
}

template <class R>
std::vector<Segment> segment_recording(std::span<const double> raw, std::size_t seg_len, std::size_t count, R& rng,
                                       double sample_rate, double shaft_speed_rpm, std::optional<FaultClass> label = {}) {
  std::vector<Segment> out;
  for (std::size_t o : segment_offsets(raw.size(), seg_len, count, rng)) {
    Segment s;
    s.samples.assign(raw.begin() + static_cast<std::ptrdiff_t>(o), raw.begin() + static_cast<std::ptrdiff_t>(o + seg_len));
    s.sample_rate = sample_rate;
    s.shaft_speed_rpm = shaft_speed_rpm;
    s.label = label;
    out.push_back(std::move(s));
  }
  return out;
}

struct HealthySplit {
  // Indices into the input list; each pool holds every member of its half
  // once, then uniform draws with replacement up to the requested size.
  std::vector<std::size_t> source_pool;
  std::vector<std::size_t> target_pool;
  std::size_t source_distinct = 0;
  std::size_t target_distinct = 0;
};

/// Disjoint halves of `n` healthy segments (source gets the larger half of an
/// odd count), each up-sampled to `pool_size` (0 = n).
template <class R>
HealthySplit split_healthy(std::size_t n, R& rng, std::size_t pool_size = 0) {
  if (n < 2) throw ParameterError("need at least two healthy segments to split");
  if (pool_size == 0) pool_size = n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = (n + 1) / 2;
  auto grow = [&](std::vector<std::size_t> pool) {
    const std::size_t distinct = pool.size();
    std::uniform_int_distribution<std::size_t> pick(0, distinct - 1);
    while (pool.size() < pool_size) pool.push_back(pool[pick(rng)]);
    return pool;
  };
  HealthySplit out;
  out.source_distinct = half;
  out.target_distinct = n - half;
  out.source_pool = grow({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half)});
  out.target_pool = grow({order.begin() + static_cast<std::ptrdiff_t>(half), order.end()});
  return out;
}

/// Per-class keep fraction, indexed by class_index.
struct ImbalanceSpec {
  std::array<double, 4> fraction{1.0, 1.0, 1.0, 1.0};

  void validate() const {
    for (double f : fraction) detail::require(f > 0.0 && f <= 1.0, "imbalance fractions must lie in (0, 1]");
  }
  static ImbalanceSpec balanced() { return {}; }
  /// Healthy 100 %, outer race 10 %, inner race 5 %, rolling element `ref`.
  static ImbalanceSpec rolling_element_level(double ref) { return {{1.0, 0.10, 0.05, ref}}; }
};

/// Number of samples kept from a class of size n.
inline std::size_t kept_count(double fraction, std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
}

struct Subsampled {
  Dataset train;  // labels stripped
  Dataset eval;   // same records, labels kept
};

/// Sorted record indices kept by `spec`: a uniform random subset of
/// kept_count(fraction, N) records per class.
template <class R>
std::vector<std::size_t> subsample_indices(const Dataset& ds, const ImbalanceSpec& spec, R& rng) {
  spec.validate();
  std::vector<std::size_t> keep;
  for (FaultClass c : kAllFaultClasses) {
    auto idx = ds.indices_of(c);
    if (idx.empty()) throw ParameterError("class " + std::string(to_string(c)) + " has no samples to subsample");
    const std::size_t k = kept_count(spec.fraction[class_index(c)], idx.size());
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

template <class R>
Subsampled subsample_imbalanced(const Dataset& ds, const ImbalanceSpec& spec, R& rng) {
  Subsampled out;
  out.eval = select(ds, subsample_indices(ds, spec, rng));
  out.train = without_labels(out.eval);
  return out;
}

/// One converted recording listed in an ingestion sidecar.
struct RecordingEntry {
  fs::path file;
  FaultClass label = FaultClass::Healthy;
  double shaft_speed_rpm = 0.0;
  double sample_rate = 0.0;
};

/// Sidecar JSON: {"recordings": [{"file", "label", "shaft_speed_rpm", "sample_rate"}]}.
/// Relative file paths resolve against the sidecar's directory.
inline std::vector<RecordingEntry> read_recording_list(const fs::path& sidecar) {
  std::vector<RecordingEntry> out;
  try {
    const json j = json::parse(nn::io::read_file(sidecar));
    for (const auto& e : j.at("recordings")) {
      RecordingEntry r;
      r.file = e.at("file").get<std::string>();
      if (r.file.is_relative()) r.file = sidecar.parent_path() / r.file;
      r.label = fault_class_from_string(e.at("label").get<std::string>());
      r.shaft_speed_rpm = e.at("shaft_speed_rpm").get<double>();
      r.sample_rate = e.at("sample_rate").get<double>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(sidecar.string() + ": " + e.what());
  }
  if (out.empty()) throw FormatError(sidecar.string() + ": no recordings listed");
  return out;
}

/// Cuts `per_class` random segments for every class present in the list,
/// spread evenly over that class's recordings (sub-fault sizes pool into one
/// class). Every record names the file it came from.
template <class R>
Dataset ingest_recordings(const std::vector<RecordingEntry>& list, std::size_t seg_len, std::size_t per_class, R& rng) {
  Dataset ds;
  for (FaultClass c : kAllFaultClasses) {
    std::vector<const RecordingEntry*> files;
    for (const auto& r : list)
      if (r.label == c) files.push_back(&r);
    for (std::size_t f = 0; f < files.size(); ++f) {
      const std::size_t count = per_class / files.size() + (f < per_class % files.size() ? 1 : 0);
      const auto raw = load_raw_f32(files[f]->file);
      const auto segs = segment_recording(raw, seg_len, count, rng, files[f]->sample_rate, files[f]->shaft_speed_rpm, c);
      for (const auto& s : segs) {
        ds.add(s, std::string(to_string(c)) + "-" + std::to_string(ds.size()), 0, files[f]->file.filename().string());
      }
    }
  }
  return ds;
}

}  // namespace synfault::datastore
