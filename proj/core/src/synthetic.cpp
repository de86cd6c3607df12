#include "sarc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "sarc/error.hpp"
#include "sarc/image_io.hpp"
#include "sarc/parallel.hpp"

namespace sarc {
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Portable draws; std distributions differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * n)); }
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0;
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2 * kPi * u2);
    has_spare_ = true;
    return r * std::cos(2 * kPi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0;
  bool has_spare_ = false;
};

struct Canvas {
  std::size_t size;
  std::vector<double> signal;
  std::vector<std::uint8_t> labels;
  const std::vector<std::uint8_t>* inside;

  bool in(long y, long x) const {
    return y >= 0 && x >= 0 && y < static_cast<long>(size) && x < static_cast<long>(size) &&
           (*inside)[static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)] != 0;
  }
};

void add_dot(Canvas& c, double cy, double cx, double radius, double amp, std::uint8_t label) {
  const long r = static_cast<long>(std::ceil(radius * 3));
  const long y0 = std::lround(cy), x0 = std::lround(cx);
  for (long y = y0 - r; y <= y0 + r; ++y) {
    for (long x = x0 - r; x <= x0 + r; ++x) {
      if (!c.in(y, x)) continue;
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      const std::size_t i = static_cast<std::size_t>(y) * c.size + static_cast<std::size_t>(x);
      c.signal[i] += amp * std::exp(-d2 / (2 * radius * radius));
      if (d2 <= radius * radius * 1.44) c.labels[i] = label;
    }
  }
}

void add_fiber(Canvas& c, double cy, double cx, double length, double angle, double amp) {
  const double uy = std::sin(angle), ux = std::cos(angle);
  const double sigma = 1.3;
  const long r = static_cast<long>(std::ceil(length / 2 + 3 * sigma));
  const long y0 = std::lround(cy), x0 = std::lround(cx);
  for (long y = y0 - r; y <= y0 + r; ++y) {
    for (long x = x0 - r; x <= x0 + r; ++x) {
      if (!c.in(y, x)) continue;
      const double dy = y - cy, dx = x - cx;
      const double along = std::clamp(dx * ux + dy * uy, -length / 2, length / 2);
      const double ey = dy - along * uy, ex = dx - along * ux;
      const double d2 = ey * ey + ex * ex;
      const std::size_t i = static_cast<std::size_t>(y) * c.size + static_cast<std::size_t>(x);
      c.signal[i] += amp * std::exp(-d2 / (2 * sigma * sigma));
      if (d2 <= 1.44 * sigma * sigma) c.labels[i] = static_cast<std::uint8_t>(OrganizationClass::kFibers);
    }
  }
}

// Thin z-disc lines plus a weak sinusoidal band, normal along `angle`,
// restricted to a pixel box. Lines sit on whole-pixel offsets.
void add_stripes(Canvas& c, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1, double period,
                 double angle, double phase, double sigma, double band, double amp) {
  const double ny = std::sin(angle), nx = std::cos(angle);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      if (!c.in(static_cast<long>(y), static_cast<long>(x))) continue;
      const double t = (static_cast<double>(x) * nx - static_cast<double>(y) * ny) / period + phase;
      const double d = std::abs(t - std::round(t)) * period;
      const std::size_t i = y * c.size + x;
      c.signal[i] += amp * ((1 - band) * std::exp(-d * d / (2 * sigma * sigma)) +
                            band * 0.5 * (1 + std::cos(2 * kPi * t)));
      if (d <= 1.2 * sigma) c.labels[i] = static_cast<std::uint8_t>(OrganizationClass::kOrganizedZDiscs);
    }
  }
}

void scatter_dots(Canvas& c, Rng& rng, std::size_t count, double radius, std::uint8_t label,
                  const std::vector<std::size_t>& cell_pixels) {
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t p = cell_pixels[rng.index(cell_pixels.size())];
    const double cy = static_cast<double>(p / c.size) + rng.uniform(-0.5, 0.5);
    const double cx = static_cast<double>(p % c.size) + rng.uniform(-0.5, 0.5);
    add_dot(c, cy, cx, radius * rng.uniform(0.8, 1.2), rng.uniform(0.6, 1.0), label);
  }
}

double snap(double deg, double step) { return step > 0 ? std::round(deg / step) * step : deg; }

}  // namespace

std::size_t SyntheticSpec::total_count() const {
  std::size_t n = 0;
  for (const auto& c : cohorts) {
    for (auto k : c.counts) n += k;
  }
  return n;
}

void SyntheticSpec::validate() const {
  if (cohorts.empty()) throw ConfigError("synthetic spec: no cohorts");
  if (total_count() == 0) throw ConfigError("synthetic spec: all level counts are zero");
  if (image_size < 32) throw ConfigError("synthetic spec: image_size must be >= 32");
  for (const auto& r : {major_axis, minor_axis}) {
    if (!(r[0] > 0 && r[0] <= r[1])) throw ConfigError("synthetic spec: axis range must satisfy 0 < lo <= hi");
  }
  if (minor_axis[1] > major_axis[1]) throw ConfigError("synthetic spec: minor axis exceeds major axis");
  if (2 * major_axis[1] + 4 > static_cast<double>(image_size)) {
    throw ConfigError("synthetic spec: major axis does not fit in image_size");
  }
  if (!(stripe_period >= 3)) throw ConfigError("synthetic spec: stripe_period must be >= 3");
  if (!(stripe_period_jitter >= 0 && stripe_period_jitter < 0.5)) {
    throw ConfigError("synthetic spec: stripe_period_jitter must be in [0, 0.5)");
  }
  if (!(line_width_fraction > 0 && line_width_fraction < 0.5)) {
    throw ConfigError("synthetic spec: line_width_fraction must be in (0, 0.5)");
  }
  if (!(band_weight >= 0 && band_weight <= 1)) throw ConfigError("synthetic spec: band_weight must be in [0, 1]");
  if (!(orientation_step_deg >= 0)) throw ConfigError("synthetic spec: orientation_step_deg must be >= 0");
  if (!(sparse_puncta_density >= 0 && dense_puncta_density >= 0)) {
    throw ConfigError("synthetic spec: puncta densities must be >= 0");
  }
  if (!(puncta_radius > 0)) throw ConfigError("synthetic spec: puncta_radius must be positive");
  if (patch_size < 4) throw ConfigError("synthetic spec: patch_size must be >= 4");
  if (!(noise_sigma >= 0)) throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  if (!(disagreement_probability >= 0 && disagreement_probability <= 1)) {
    throw ConfigError("synthetic spec: disagreement_probability must be in [0, 1]");
  }
  if (!(classmap_error >= 0 && classmap_error <= 1)) {
    throw ConfigError("synthetic spec: classmap_error must be in [0, 1]");
  }
  if (!(classmap_failure >= 0 && classmap_failure <= 1)) {
    throw ConfigError("synthetic spec: classmap_failure must be in [0, 1]");
  }
}

SyntheticSpec SyntheticSpec::from_config(const KeyValueConfig& kv) {
  SyntheticSpec s;
  auto size_value = [&](const std::string& key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(key + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  auto pair = [&](const std::string& key, std::array<double, 2> fallback) {
    const auto v = kv.get_double_list(key, {fallback[0], fallback[1]});
    if (v.size() != 2) throw ConfigError(key + " needs two values (lo, hi)");
    return std::array<double, 2>{v[0], v[1]};
  };
  auto counts = [&](const std::string& key) {
    const auto v = kv.get_int_list(key, {120, 120, 120, 120, 120});
    if (v.size() != 5) throw ConfigError(key + " needs five per-level counts");
    std::array<std::size_t, 5> out{};
    for (std::size_t i = 0; i < 5; ++i) {
      if (v[i] < 0) throw ConfigError(key + " entries must be non-negative");
      out[i] = static_cast<std::size_t>(v[i]);
    }
    return out;
  };
  s.image_size = size_value("image_size", s.image_size);
  s.major_axis = pair("major_axis", s.major_axis);
  s.minor_axis = pair("minor_axis", s.minor_axis);
  s.stripe_period = kv.get_double("stripe_period", s.stripe_period);
  s.stripe_period_jitter = kv.get_double("stripe_period_jitter", s.stripe_period_jitter);
  s.line_width_fraction = kv.get_double("line_width_fraction", s.line_width_fraction);
  s.band_weight = kv.get_double("band_weight", s.band_weight);
  s.orientation_step_deg = kv.get_double("orientation_step_deg", s.orientation_step_deg);
  s.sparse_puncta_density = kv.get_double("sparse_puncta_density", s.sparse_puncta_density);
  s.dense_puncta_density = kv.get_double("dense_puncta_density", s.dense_puncta_density);
  s.puncta_radius = kv.get_double("puncta_radius", s.puncta_radius);
  s.patch_size = size_value("patch_size", s.patch_size);
  s.noise_sigma = kv.get_double("noise_sigma", s.noise_sigma);
  s.disagreement_probability = kv.get_double("disagreement_probability", s.disagreement_probability);
  s.classmap_error = kv.get_double("classmap_error", s.classmap_error);
  s.classmap_failure = kv.get_double("classmap_failure", s.classmap_failure);
  s.seed = kv.get_u64("seed", s.seed);

  const auto n = size_value("cohorts", 0);
  if (n == 0) {
    s.cohorts = {SyntheticCohort{static_cast<int>(kv.get_int("day", 18)), counts("counts")}};
  } else {
    if (kv.contains("counts") || kv.contains("day")) {
      throw ConfigError("use either counts/day or cohorts with cohortK.* keys, not both");
    }
    s.cohorts.clear();
    for (std::size_t k = 1; k <= n; ++k) {
      const std::string prefix = "cohort" + std::to_string(k) + ".";
      if (!kv.contains(prefix + "counts")) throw ConfigError("missing key " + prefix + "counts");
      s.cohorts.push_back({static_cast<int>(kv.get_int(prefix + "day", 18)), counts(prefix + "counts")});
    }
  }
  s.validate();
  return s;
}

void SyntheticSpec::write_to(KeyValueConfig& kv) const {
  kv.set("image_size", std::to_string(image_size));
  kv.set("major_axis", join_doubles({major_axis[0], major_axis[1]}));
  kv.set("minor_axis", join_doubles({minor_axis[0], minor_axis[1]}));
  kv.set("stripe_period", format_double(stripe_period));
  kv.set("stripe_period_jitter", format_double(stripe_period_jitter));
  kv.set("line_width_fraction", format_double(line_width_fraction));
  kv.set("band_weight", format_double(band_weight));
  kv.set("orientation_step_deg", format_double(orientation_step_deg));
  kv.set("sparse_puncta_density", format_double(sparse_puncta_density));
  kv.set("dense_puncta_density", format_double(dense_puncta_density));
  kv.set("puncta_radius", format_double(puncta_radius));
  kv.set("patch_size", std::to_string(patch_size));
  kv.set("noise_sigma", format_double(noise_sigma));
  kv.set("disagreement_probability", format_double(disagreement_probability));
  kv.set("classmap_error", format_double(classmap_error));
  kv.set("classmap_failure", format_double(classmap_failure));
  kv.set("seed", std::to_string(seed));
  kv.set("cohorts", std::to_string(cohorts.size()));
  for (std::size_t k = 0; k < cohorts.size(); ++k) {
    const std::string prefix = "cohort" + std::to_string(k + 1) + ".";
    std::vector<std::int64_t> c(cohorts[k].counts.begin(), cohorts[k].counts.end());
    kv.set(prefix + "counts", join_ints(c));
    kv.set(prefix + "day", std::to_string(cohorts[k].day));
  }
}

SyntheticCell render_cell(const SyntheticSpec& spec, int level, std::uint64_t cell_seed) {
  if (level < 1 || level > 5) throw ConfigError("synthetic level must be in 1..5, got " + std::to_string(level));
  Rng rng(cell_seed);
  const std::size_t n = spec.image_size;
  const double size = static_cast<double>(n);

  // Cell outline: random ellipse fully inside the frame.
  const double a = rng.uniform(spec.major_axis[0], spec.major_axis[1]);
  const double b = std::min(a, rng.uniform(spec.minor_axis[0], spec.minor_axis[1]));
  const double angle_deg = snap(rng.uniform(0, 180), spec.orientation_step_deg);
  const double phi = angle_deg * kPi / 180;
  const double ex = std::sqrt(a * a * std::cos(phi) * std::cos(phi) + b * b * std::sin(phi) * std::sin(phi));
  const double ey = std::sqrt(a * a * std::sin(phi) * std::sin(phi) + b * b * std::cos(phi) * std::cos(phi));
  const double cx = rng.uniform(ex + 1, size - ex - 2);
  const double cy = rng.uniform(ey + 1, size - ey - 2);

  std::vector<std::uint8_t> inside(n * n, 0);
  std::vector<std::size_t> cell_pixels;
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      // Image rows grow downwards; angles are counter-clockwise on screen.
      const double dx = static_cast<double>(x) - cx, dy = cy - static_cast<double>(y);
      const double u = dx * std::cos(phi) + dy * std::sin(phi);
      const double v = -dx * std::sin(phi) + dy * std::cos(phi);
      if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) {
        inside[y * n + x] = 1;
        cell_pixels.push_back(y * n + x);
      }
    }
  }

  Canvas c{n, std::vector<double>(n * n, 0.0), std::vector<std::uint8_t>(n * n, 0), &inside};
  // Diffuse cytoplasm with slow shading.
  const double base = rng.uniform(0.14, 0.22);
  const double wy = rng.uniform(0.02, 0.08), wx = rng.uniform(0.02, 0.08), ph = rng.uniform(0, 2 * kPi);
  for (auto p : cell_pixels) {
    const double y = static_cast<double>(p / n), x = static_cast<double>(p % n);
    c.signal[p] = base + 0.04 * std::sin(wy * y + wx * x + ph);
    c.labels[p] = static_cast<std::uint8_t>(OrganizationClass::kDiffuseOther);
  }

  const double area = static_cast<double>(cell_pixels.size());
  const double period =
      spec.stripe_period * (1 + rng.uniform(-spec.stripe_period_jitter, spec.stripe_period_jitter));
  const double sigma = spec.line_width_fraction * period;
  const auto dots = [&](double density) {
    return static_cast<std::size_t>(std::lround(density * area * rng.uniform(0.7, 1.3)));
  };
  constexpr auto kDisorganized = static_cast<std::uint8_t>(OrganizationClass::kDisorganizedPuncta);
  constexpr auto kOrganized = static_cast<std::uint8_t>(OrganizationClass::kOrganizedPuncta);

  switch (level) {
    case 1:
      scatter_dots(c, rng, dots(spec.sparse_puncta_density), spec.puncta_radius, kDisorganized, cell_pixels);
      break;
    case 2:
      scatter_dots(c, rng, dots(spec.dense_puncta_density), spec.puncta_radius, kOrganized, cell_pixels);
      break;
    case 3: {
      scatter_dots(c, rng, dots(spec.dense_puncta_density * 0.15), spec.puncta_radius, kOrganized, cell_pixels);
      const std::size_t fibers = std::max<std::size_t>(3, static_cast<std::size_t>(area / 110 * rng.uniform(0.7, 1.3)));
      for (std::size_t k = 0; k < fibers; ++k) {
        const std::size_t p = cell_pixels[rng.index(cell_pixels.size())];
        add_fiber(c, static_cast<double>(p / n), static_cast<double>(p % n), rng.uniform(14, 26),
                  rng.uniform(0, kPi), rng.uniform(0.5, 0.8));
      }
      break;
    }
    case 4: {
      const std::size_t ps = spec.patch_size;
      for (std::size_t y0 = 0; y0 < n; y0 += ps) {
        for (std::size_t x0 = 0; x0 < n; x0 += ps) {
          const std::size_t y1 = std::min(n, y0 + ps), x1 = std::min(n, x0 + ps);
          const double patch_angle = rng.uniform(0, kPi);
          const double phase = std::round(rng.uniform(0, period)) / period;
          rng.uniform();  // unused draw, kept so existing datasets regenerate bit for bit
          add_stripes(c, y0, y1, x0, x1, period, patch_angle, phase, sigma, spec.band_weight, rng.uniform(0.6, 0.9));
        }
      }
      break;
    }
    case 5:
      // Z-disc lines run across the long axis, so the stripe normal follows it.
      add_stripes(c, 0, n, 0, n, period, phi, std::round(rng.uniform(0, period)) / period, sigma,
                  spec.band_weight, rng.uniform(0.7, 0.9));
      break;
  }

  // Separate stream so the image does not depend on the error rates.
  Rng err(mix_seed(cell_seed ^ 0xc1a55e7707ULL));
  if (err.uniform() < spec.classmap_failure) {
    const auto label = static_cast<std::uint8_t>(1 + err.index(5));
    for (auto p : cell_pixels) c.labels[p] = label;
  } else if (spec.classmap_error > 0) {
    const std::size_t ps = spec.patch_size;
    for (std::size_t y0 = 0; y0 < n; y0 += ps) {
      for (std::size_t x0 = 0; x0 < n; x0 += ps) {
        if (err.uniform() >= spec.classmap_error) continue;
        const auto label = static_cast<std::uint8_t>(1 + err.index(5));
        for (std::size_t y = y0; y < std::min(n, y0 + ps); ++y) {
          for (std::size_t x = x0; x < std::min(n, x0 + ps); ++x) {
            if (c.labels[y * n + x] != 0) c.labels[y * n + x] = label;
          }
        }
      }
    }
  }

  const double gain = rng.uniform(0.75, 1.0);
  std::vector<float> pixels(n * n);
  for (std::size_t i = 0; i < n * n; ++i) {
    const double v = (inside[i] ? gain * c.signal[i] : 0.03) + spec.noise_sigma * rng.normal();
    pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return SyntheticCell{GrayImage(n, n, std::move(pixels)), CellMask(n, n, inside),
                       ClassMap{n, n, std::move(c.labels)}, level, period, angle_deg};
}

std::vector<CellRecord> generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  std::error_code ec;
  for (const char* sub : {"images", "masks", "classmaps"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  struct Job {
    int level;
    int day;
  };
  std::vector<Job> jobs;
  for (const auto& cohort : spec.cohorts) {
    for (int level = 1; level <= 5; ++level) {
      for (std::size_t k = 0; k < cohort.counts[static_cast<std::size_t>(level - 1)]; ++k) {
        jobs.push_back({level, cohort.day});
      }
    }
  }
  const int width = std::max<int>(5, static_cast<int>(std::to_string(jobs.size()).size()));

  std::vector<CellRecord> records(jobs.size());
  std::vector<double> periods(jobs.size()), orientations(jobs.size());
  std::vector<std::string> failures(jobs.size());
  parallel_for(std::size_t{0}, jobs.size(), [&](std::size_t i) {
    try {
      const std::uint64_t seed = mix_seed(spec.seed ^ mix_seed(i + 1));
      SyntheticCell cell = render_cell(spec, jobs[i].level, seed);
      std::string id = std::to_string(i + 1);
      id = "cell_" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
      CellRecord& r = records[i];
      r.cell_id = id;
      r.image_path = out_dir / "images" / (id + ".png");
      r.mask_path = out_dir / "masks" / (id + ".png");
      r.classmap_path = out_dir / "classmaps" / (id + ".png");
      r.day = jobs[i].day;
      r.expert1 = r.expert2 = jobs[i].level;
      // Separate stream so the knob does not change the rendered pixels.
      Rng vote(mix_seed(seed ^ 0xD15A6EEULL));
      if (vote.uniform() < spec.disagreement_probability) {
        const int step = (r.expert1 == 5 || (r.expert1 > 1 && vote.uniform() < 0.5)) ? -1 : 1;
        r.expert2 = r.expert1 + step;
      }
      r.ground_truth = expert_average(r.expert1, r.expert2);
      periods[i] = cell.period;
      orientations[i] = cell.orientation_deg;

      std::vector<std::uint8_t> mask(cell.mask.membership());
      for (auto& m : mask) m = m ? 255 : 0;
      write_png_gray8(r.image_path, cell.image);
      write_png_labels(r.mask_path, cell.mask.height(), cell.mask.width(), mask);
      write_png_labels(*r.classmap_path, cell.classmap.height, cell.classmap.width, cell.classmap.labels);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  for (const auto& f : failures) {
    if (!f.empty()) throw IoError("synthetic generation failed: " + f);
  }

  write_manifest(out_dir / "manifest.csv", records);
  std::ofstream truth(out_dir / "truth.csv", std::ios::trunc);
  if (!truth) throw IoError("cannot write " + (out_dir / "truth.csv").string());
  truth << "cell_id,level,period_px,orientation_deg\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    truth << records[i].cell_id << ',' << jobs[i].level << ',' << format_double(periods[i]) << ','
          << format_double(orientations[i]) << '\n';
  }
  KeyValueConfig kv;
  spec.write_to(kv);
  std::ofstream spec_out(out_dir / "spec.txt", std::ios::trunc);
  spec_out << kv.to_text();
  if (!truth || !spec_out) throw IoError("failed writing synthetic metadata in " + out_dir.string());
  return records;
}

}  // namespace sarc
