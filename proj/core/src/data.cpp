#include "sarc/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

#include "sarc/config.hpp"
#include "sarc/csv.hpp"
#include "sarc/error.hpp"
#include "sarc/image_io.hpp"

namespace sarc {
namespace fs = std::filesystem;

namespace {

const std::array<std::string_view, 7> kRequiredColumns{
    "cell_id", "image_path", "mask_path", "classmap_path", "day", "expert1", "expert2"};

int parse_int_field(const std::string& text, const std::string& column, const std::string& where) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(where + ": column '" + column + "' must be an integer, got '" + text + "'");
  }
  return v;
}

double parse_double_field(const std::string& text, const std::string& column, const std::string& where) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ParseError(where + ": column '" + column + "' must be a finite number, got '" + text + "'");
  }
  return v;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Unbiased integer in [0, bound) from raw engine output.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

template <typename V>
void seeded_shuffle(V& values, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[bounded(rng, i)]);
  }
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double expert_average(int expert1, int expert2) { return (expert1 + expert2) / 2.0; }

ManifestLoad load_manifest(const fs::path& path) {
  const CsvTable table = read_csv(path);
  for (auto col : kRequiredColumns) {
    if (table.column(std::string(col)) == std::string::npos) {
      throw ParseError(path.string() + ": missing required column '" + std::string(col) + "'");
    }
  }
  const auto& names = feature_names();
  std::array<std::size_t, 11> feature_cols{};
  std::size_t present = 0;
  for (std::size_t j = 0; j < names.size(); ++j) {
    feature_cols[j] = table.column(std::string(names[j]));
    if (feature_cols[j] != std::string::npos) ++present;
  }
  if (present != 0 && present != names.size()) {
    throw ParseError(path.string() + ": feature columns must be all present or all absent (found " +
                     std::to_string(present) + " of 11)");
  }

  const fs::path base = path.parent_path();
  auto col = [&](const char* name) { return table.column(name); };
  ManifestLoad out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + " row " + std::to_string(table.line_numbers[r]);
    CellRecord rec;
    rec.cell_id = row[col("cell_id")];
    if (rec.cell_id.empty()) throw ParseError(where + ": empty cell_id");
    rec.image_path = resolve(base, row[col("image_path")]);
    rec.mask_path = resolve(base, row[col("mask_path")]);
    if (!row[col("classmap_path")].empty()) rec.classmap_path = resolve(base, row[col("classmap_path")]);
    rec.day = parse_int_field(row[col("day")], "day", where);
    rec.expert1 = parse_int_field(row[col("expert1")], "expert1", where);
    rec.expert2 = parse_int_field(row[col("expert2")], "expert2", where);
    for (const int s : {rec.expert1, rec.expert2}) {
      if (s < 0 || s > 5) throw ParseError(where + ": expert score " + std::to_string(s) + " outside 0-5");
    }
    if (present) {
      std::array<double, 11> f{};
      for (std::size_t j = 0; j < f.size(); ++j) {
        f[j] = parse_double_field(row[feature_cols[j]], std::string(names[j]), where);
      }
      rec.tabular_features = f;
    }
    if (rec.expert1 == 0 || rec.expert2 == 0) {
      ++out.excluded;
      continue;
    }
    rec.ground_truth = expert_average(rec.expert1, rec.expert2);
    out.records.push_back(std::move(rec));
  }
  std::clog << "manifest " << path.string() << ": " << out.records.size() << " records, "
            << out.excluded << " excluded (expert score 0)\n";
  return out;
}

void write_manifest(const fs::path& path, std::span<const CellRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  const fs::path base = path.parent_path();
  const bool with_features =
      !records.empty() && std::all_of(records.begin(), records.end(),
                                      [](const CellRecord& r) { return r.tabular_features.has_value(); });
  out << "cell_id,image_path,mask_path,classmap_path,day,expert1,expert2";
  if (with_features) {
    for (auto n : feature_names()) out << ',' << n;
  }
  out << '\n';
  auto rel = [&](const fs::path& p) { return csv_field(p.lexically_relative(base).generic_string()); };
  for (const auto& r : records) {
    out << csv_field(r.cell_id) << ',' << rel(r.image_path) << ',' << rel(r.mask_path) << ','
        << (r.classmap_path ? rel(*r.classmap_path) : std::string()) << ',' << r.day << ','
        << r.expert1 << ',' << r.expert2;
    if (with_features) {
      for (double v : *r.tabular_features) out << ',' << format_double(v);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing manifest: " + path.string());
}

std::string_view split_name(SplitLabel label) {
  switch (label) {
    case SplitLabel::kTrain: return "train";
    case SplitLabel::kVal: return "val";
    case SplitLabel::kTest: return "test";
  }
  return "?";
}

SplitLabel parse_split(std::string_view text) {
  if (text == "train") return SplitLabel::kTrain;
  if (text == "val") return SplitLabel::kVal;
  if (text == "test") return SplitLabel::kTest;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected train, val or test)");
}

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.train = n * 64 / 100;
  c.val = n * 16 / 100;
  c.test = n - c.train - c.val;
  return c;
}

std::vector<std::size_t> SplitAssignment::indices(SplitLabel label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

SplitAssignment split_records(std::span<const CellRecord> records, const SplitOptions& options) {
  if (records.empty()) throw DegenerateInputError("split: no records");
  if (records.size() < 10) {
    throw DegenerateInputError("split: need at least 10 records, got " + std::to_string(records.size()));
  }
  SplitAssignment a{options.seed, options.stratify,
                    std::vector<SplitLabel>(records.size(), SplitLabel::kTest)};
  auto assign = [&](std::vector<std::size_t> group, std::uint64_t seed) {
    seeded_shuffle(group, seed);
    const SplitCounts c = split_counts(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
      a.labels[group[i]] = i < c.train ? SplitLabel::kTrain
                           : i < c.train + c.val ? SplitLabel::kVal
                                                 : SplitLabel::kTest;
    }
  };
  if (!options.stratify) {
    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    assign(std::move(all), options.seed);
  } else {
    std::map<long, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) groups[std::lround(records[i].ground_truth)].push_back(i);
    for (auto& [score, members] : groups) {
      assign(std::move(members), mix_seed(options.seed ^ static_cast<std::uint64_t>(score)));
    }
  }
  return a;
}

std::vector<CellRecord> select(std::span<const CellRecord> records, std::span<const std::size_t> indices) {
  std::vector<CellRecord> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(records[i]);
  return out;
}

void validate_unscaled(const FeatureVector& v, const std::string& context) {
  if (v.values.size() != feature_count(v.protocol)) {
    throw ParseError(context + ": feature vector has " + std::to_string(v.values.size()) + " entries");
  }
  const auto& f = v.values;
  if (!(f[0] > 0)) throw ParseError(context + ": cell_area_px must be positive");
  if (!(f[1] >= 1.0 - 1e-9)) throw ParseError(context + ": aspect_ratio must be >= 1");
  if (!(f[4] >= 1.0)) throw ParseError(context + ": peak_distance_px must be >= 1");
  if (v.protocol == Protocol::kP2) {
    double sum = 0;
    for (std::size_t j = 5; j < 11; ++j) {
      if (f[j] < 0 || f[j] > 1) throw ParseError(context + ": class fractions must lie in [0,1]");
      sum += f[j];
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ParseError(context + ": class fractions must sum to 1");
  }
}

const FeatureVector& assemble_features(CellRecord& record, Protocol protocol, const GlcmOptions& options) {
  if (record.features && record.features->protocol == protocol) return *record.features;
  FeatureVector fv;
  if (record.tabular_features) {
    fv = select_protocol(*record.tabular_features, protocol);
  } else {
    try {
      const GrayImage image = load_image(record.image_path);
      const CellMask mask = load_mask(record.mask_path);
      std::optional<ClassMap> classmap;
      if (protocol == Protocol::kP2) {
        if (!record.classmap_path) {
          throw ConfigError("protocol p2 needs a class map and none is listed");
        }
        classmap = load_classmap(*record.classmap_path);
      }
      fv = extract_features({&image, &mask, classmap ? &*classmap : nullptr}, protocol, options);
    } catch (const IoError& e) {
      throw IoError("cell " + record.cell_id + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("cell " + record.cell_id + ": " + e.what());
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("cell " + record.cell_id + ": " + e.what());
    } catch (const DimensionError& e) {
      throw DimensionError("cell " + record.cell_id + ": " + e.what());
    }
  }
  validate_unscaled(fv, "cell " + record.cell_id);
  record.features = std::move(fv);
  return *record.features;
}

Tensor load_model_input(const CellRecord& record, const InputPipeline& pipeline) {
  try {
    return prepare_model_input(load_image(record.image_path, pipeline.channel), pipeline.input_size,
                               pipeline.resize);
  } catch (const IoError& e) {
    throw IoError("cell " + record.cell_id + ": " + e.what());
  }
}

const std::vector<float>& InputCache::plane(std::size_t index, const CellRecord& record,
                                            const InputPipeline& pipeline) {
  if (index >= planes_.size()) planes_.resize(index + 1);
  if (planes_[index]) return *planes_[index];
  const Tensor t = load_model_input(record, pipeline);
  const std::size_t area = pipeline.input_size * pipeline.input_size;
  std::vector<float> plane(t.values().begin(), t.values().begin() + static_cast<std::ptrdiff_t>(area));
  const std::size_t bytes = area * sizeof(float);
  if (used_ + bytes <= budget_) {
    used_ += bytes;
    planes_[index] = std::move(plane);
    return *planes_[index];
  }
  scratch_ = std::move(plane);
  return scratch_;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size,
                                                  std::optional<std::uint64_t> shuffle_seed,
                                                  std::uint64_t epoch) {
  if (count == 0) throw DegenerateInputError("batches: no records");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  if (shuffle_seed) seeded_shuffle(order, mix_seed(*shuffle_seed ^ mix_seed(epoch)));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return out;
}

std::vector<float> dihedral(std::span<const float> plane, std::size_t s, unsigned k) {
  if (plane.size() != s * s) throw DimensionError("dihedral: plane is not " + std::to_string(s) + "x" + std::to_string(s));
  std::vector<float> out(plane.size());
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      std::size_t sy = (k & 1U) ? x : y, sx = (k & 1U) ? y : x;
      if (k & 2U) sy = s - 1 - sy;
      if (k & 4U) sx = s - 1 - sx;
      out[y * s + x] = plane[sy * s + sx];
    }
  }
  return out;
}

Batch make_batch(std::span<const CellRecord> records, std::span<const FeatureVector> scaled_features,
                 std::span<const std::size_t> indices, const InputPipeline& pipeline, InputCache& cache,
                 std::span<const std::uint8_t> transforms) {
  if (indices.empty()) throw DegenerateInputError("make_batch: empty batch");
  if (!transforms.empty() && transforms.size() != indices.size()) {
    throw DimensionError("make_batch: transform count does not match batch size");
  }
  const std::size_t b = indices.size();
  const std::size_t s = pipeline.input_size;
  const std::size_t area = s * s;
  const std::size_t f = scaled_features[indices[0]].values.size();
  std::vector<float> images(b * 3 * area);
  std::vector<float> feats(b * f);
  std::vector<float> targets(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t r = indices[i];
    const auto& cached = cache.plane(r, records[r], pipeline);
    const bool flip = !transforms.empty() && transforms[i] != 0;
    const std::vector<float> moved = flip ? dihedral(cached, s, transforms[i]) : std::vector<float>{};
    const auto& plane = flip ? moved : cached;
    for (std::size_t c = 0; c < 3; ++c) {
      std::copy(plane.begin(), plane.end(), images.begin() + static_cast<std::ptrdiff_t>((i * 3 + c) * area));
    }
    const auto& fv = scaled_features[r];
    if (fv.values.size() != f) throw DimensionError("make_batch: inconsistent feature widths");
    for (std::size_t j = 0; j < f; ++j) feats[i * f + j] = static_cast<float>(fv.values[j]);
    targets[i] = static_cast<float>(records[r].ground_truth);
  }
  return {Tensor(Shape{b, 3, s, s}, std::move(images)), Tensor(Shape{b, f}, std::move(feats)),
          Tensor(Shape{b, 1}, std::move(targets)), std::vector<std::size_t>(indices.begin(), indices.end())};
}

BatchStream::BatchStream(std::span<const CellRecord> records, std::span<const FeatureVector> scaled_features,
                         InputPipeline pipeline, std::size_t batch_size,
                         std::optional<std::uint64_t> shuffle_seed, std::uint64_t epoch, InputCache* cache,
                         bool augment)
    : records_(records),
      features_(scaled_features),
      pipeline_(pipeline),
      order_(batch_order(records.size(), batch_size, shuffle_seed, epoch)),
      cache_(cache),
      augment_seed_(mix_seed(mix_seed(shuffle_seed.value_or(0) ^ 0x9e3779b97f4a7c15ULL) ^ epoch)),
      augment_(augment) {
  if (scaled_features.size() != records.size()) {
    throw DimensionError("BatchStream: " + std::to_string(scaled_features.size()) +
                         " feature vectors for " + std::to_string(records.size()) + " records");
  }
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const auto& indices = order_[cursor_++];
  std::vector<std::uint8_t> transforms;
  if (augment_) {
    for (std::size_t r : indices) transforms.push_back(static_cast<std::uint8_t>(mix_seed(augment_seed_ ^ r) & 7U));
  }
  return make_batch(records_, features_, indices, pipeline_, cache_ ? *cache_ : local_cache_, transforms);
}

}  // namespace sarc
