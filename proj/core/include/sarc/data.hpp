#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sarc/features.hpp"
#include "sarc/image.hpp"
#include "sarc/tensor.hpp"

namespace sarc {

// One single-cell sample as listed in a manifest.
struct CellRecord {
  std::string cell_id;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;
  std::optional<std::filesystem::path> classmap_path;
  int day = 0;
  int expert1 = 0;
  int expert2 = 0;
  double ground_truth = 0;  // (expert1 + expert2) / 2
  std::optional<std::array<double, 11>> tabular_features;
  std::optional<FeatureVector> features;  // unscaled, filled by assemble_features
};

struct ManifestLoad {
  std::vector<CellRecord> records;
  std::size_t excluded = 0;  // rows with an expert score of 0
};

// Columns: cell_id, image_path, mask_path, classmap_path, day, expert1,
// expert2, optionally followed by all 11 feature columns. Relative paths are
// resolved against the manifest's directory.
ManifestLoad load_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, std::span<const CellRecord> records);

double expert_average(int expert1, int expert2);

// --- splits ---

enum class SplitLabel : std::uint8_t { kTrain, kVal, kTest };
std::string_view split_name(SplitLabel label);
SplitLabel parse_split(std::string_view text);

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

// floor(64%) train, floor(16%) val, remainder test.
SplitCounts split_counts(std::size_t n);

struct SplitOptions {
  std::uint64_t seed = 0;
  bool stratify = false;
};

struct SplitAssignment {
  std::uint64_t seed = 0;
  bool stratified = false;
  std::vector<SplitLabel> labels;  // one per record, in record order

  std::vector<std::size_t> indices(SplitLabel label) const;
};

// Seeded shuffle then contiguous 64/16/20 cut; with `stratify`, the cut is
// applied within each rounded-score group.
SplitAssignment split_records(std::span<const CellRecord> records, const SplitOptions& options);

std::vector<CellRecord> select(std::span<const CellRecord> records, std::span<const std::size_t> indices);

// --- features ---

// Uses manifest-supplied features when present, otherwise measures them
// from the image, mask and (for P2) class map. Caches into record.features.
const FeatureVector& assemble_features(CellRecord& record, Protocol protocol,
                                       const GlcmOptions& options = {});

// Domain checks on an unscaled vector; throws ParseError naming `context`.
void validate_unscaled(const FeatureVector& v, const std::string& context);

// --- model inputs and batching ---

struct InputPipeline {
  std::size_t input_size = 224;
  ResizeMode resize = ResizeMode::kStretch;
  std::size_t channel = 0;
};

// [3,S,S] normalised image tensor; I/O errors name the cell.
Tensor load_model_input(const CellRecord& record, const InputPipeline& pipeline);

// Memoises single-plane model inputs per record index within a byte budget.
class InputCache {
 public:
  explicit InputCache(std::size_t byte_budget = std::size_t{1} << 30) : budget_(byte_budget) {}
  // Normalised [S*S] plane for record `index`.
  const std::vector<float>& plane(std::size_t index, const CellRecord& record,
                                  const InputPipeline& pipeline);

 private:
  std::size_t budget_;
  std::size_t used_ = 0;
  std::vector<std::optional<std::vector<float>>> planes_;
  std::vector<float> scratch_;
};

struct Batch {
  Tensor images;    // [B,3,S,S]
  Tensor features;  // [B,F]
  Tensor targets;   // [B,1]
  std::vector<std::size_t> indices;  // record indices in batch order
};

// Record order for one epoch split into batches; the final partial batch is
// kept. No seed keeps manifest order; otherwise the permutation is derived
// from (seed, epoch).
std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size,
                                                  std::optional<std::uint64_t> shuffle_seed,
                                                  std::uint64_t epoch);

// Iterates one epoch of batches. `scaled_features[i]` belongs to records[i].
class BatchStream {
 public:
  BatchStream(std::span<const CellRecord> records, std::span<const FeatureVector> scaled_features,
              InputPipeline pipeline, std::size_t batch_size,
              std::optional<std::uint64_t> shuffle_seed, std::uint64_t epoch = 0,
              InputCache* cache = nullptr, bool augment = false);

  std::optional<Batch> next();
  std::size_t batch_count() const { return order_.size(); }

 private:
  std::span<const CellRecord> records_;
  std::span<const FeatureVector> features_;
  InputPipeline pipeline_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t cursor_ = 0;
  InputCache* cache_;
  InputCache local_cache_{0};
  std::uint64_t augment_seed_ = 0;
  bool augment_ = false;
};

// `transforms[i]` in [0,8) picks one of the square's symmetries for item i
// (bit 0 transpose, bit 1 flip rows, bit 2 flip columns); empty means identity.
Batch make_batch(std::span<const CellRecord> records, std::span<const FeatureVector> scaled_features,
                 std::span<const std::size_t> indices, const InputPipeline& pipeline,
                 InputCache& cache, std::span<const std::uint8_t> transforms = {});

// Applies symmetry `k` (see make_batch) to a row-major s×s plane.
std::vector<float> dihedral(std::span<const float> plane, std::size_t s, unsigned k);

// splitmix64 step; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace sarc
