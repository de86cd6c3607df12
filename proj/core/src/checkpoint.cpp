#include "sarc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "sarc/error.hpp"

namespace sarc {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  KeyValueConfig meta = checkpoint.metadata;
  checkpoint.params.config.write_to(meta);
  const std::string text = meta.to_text();

  std::string out(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  checkpoint.params.for_each_tensor(
      [&](const std::string& name, const Tensor& t, TensorRole) { tensors.emplace_back(name, &t); });
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (auto e : t->shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t->values()) put_f32(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.text(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto text_len = in.u32("metadata length");
  KeyValueConfig meta;
  try {
    meta = KeyValueConfig::parse(in.text(text_len, "metadata"), "checkpoint metadata");
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  SarcNetConfig config;
  try {
    config = SarcNetConfig::from_config(meta);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid model config in checkpoint: ") + e.what());
  }

  std::map<std::string, std::pair<Shape, std::vector<float>>> stored;
  const auto count = in.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.u32("tensor name length");
    std::string name = in.text(name_len, "tensor name");
    const auto rank = in.u32("tensor rank");
    if (rank > 8) throw CheckpointError("implausible rank for tensor '" + name + "'");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32("tensor extent"));
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<float>(in.u32("tensor values"));
    if (!stored.emplace(name, std::make_pair(shape, std::move(values))).second) {
      throw CheckpointError("duplicate tensor '" + name + "'");
    }
  }
  if (!in.done()) throw CheckpointError("trailing bytes after last tensor");

  Checkpoint ck{init_params<float>(config), meta};
  std::size_t matched = 0;
  ck.params.for_each_tensor([&](const std::string& name, Tensor& t, TensorRole) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second.first != t.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(it->second.first) +
                            ", config expects " + shape_str(t.shape()));
    }
    std::copy(it->second.second.begin(), it->second.second.end(), t.values().begin());
    ++matched;
  });
  if (matched != stored.size()) throw CheckpointError("checkpoint holds unknown tensors");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void write_scaler(KeyValueConfig& kv, const ScalerParams& scaler) {
  kv.set("scaler.protocol", std::string(protocol_name(scaler.protocol)));
  kv.set("scaler.mean", join_doubles(scaler.mean));
  kv.set("scaler.std", join_doubles(scaler.std));
  if (!scaler.lo.empty()) {
    kv.set("scaler.min", join_doubles(scaler.lo));
    kv.set("scaler.max", join_doubles(scaler.hi));
  }
  kv.set("scaler.fitted_on", scaler.fitted_on);
}

ScalerParams read_scaler(const KeyValueConfig& kv) {
  if (!kv.contains("scaler.mean")) throw ConfigError("checkpoint has no fitted feature scaler");
  ScalerParams s;
  s.protocol = parse_protocol(kv.get_string("scaler.protocol", "p2"));
  s.mean = kv.get_double_list("scaler.mean", {});
  s.std = kv.get_double_list("scaler.std", {});
  s.lo = kv.get_double_list("scaler.min", {});
  s.hi = kv.get_double_list("scaler.max", {});
  s.fitted_on = kv.get_string("scaler.fitted_on", "train");
  if (s.mean.size() != feature_count(s.protocol) || s.std.size() != s.mean.size() ||
      s.lo.size() != s.hi.size() || (!s.lo.empty() && s.lo.size() != s.mean.size())) {
    throw ConfigError("scaler metadata does not match protocol " +
                      std::string(protocol_name(s.protocol)));
  }
  return s;
}

}  // namespace sarc
