#include "sarc/model.hpp"

#include <cmath>
#include <random>

#include "sarc/error.hpp"

namespace sarc {

SarcNetConfig SarcNetConfig::scaled() {
  SarcNetConfig c;
  c.input_size = 64;
  c.stage_widths = {8, 16, 32, 64};
  return c;
}

void SarcNetConfig::validate() const {
  for (auto w : stage_widths) {
    if (w == 0) throw ConfigError("stage_widths entries must be positive");
  }
  if (stage_widths[3] < 2) throw ConfigError("last stage width must be at least 2");
  if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
  for (auto w : feature_widths) {
    if (w == 0) throw ConfigError("feature_widths entries must be positive");
  }
  for (auto w : head_widths) {
    if (w == 0) throw ConfigError("head_widths entries must be positive");
  }
  if (head_widths[3] != 1) throw ConfigError("last head width must be 1 (scalar score)");
  // Stem /2, max pool /2, then three stride-2 stages: at least 1x1 at the end.
  if (input_size < 32) throw ConfigError("input_size must be at least 32");
}

namespace {
template <std::size_t N>
std::array<std::size_t, N> fixed_list(const KeyValueConfig& kv, const std::string& key,
                                      const std::array<std::size_t, N>& base) {
  std::vector<std::int64_t> fallback(base.begin(), base.end());
  const auto values = kv.get_int_list(key, fallback);
  if (values.size() != N) {
    throw ConfigError("key '" + key + "' needs " + std::to_string(N) + " entries, got " +
                      std::to_string(values.size()));
  }
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (values[i] <= 0) throw ConfigError("key '" + key + "' entries must be positive");
    out[i] = static_cast<std::size_t>(values[i]);
  }
  return out;
}

template <std::size_t N>
std::string list_text(const std::array<std::size_t, N>& values) {
  return join_ints(std::vector<std::int64_t>(values.begin(), values.end()));
}
}  // namespace

SarcNetConfig SarcNetConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, SarcNetConfig{}); }

SarcNetConfig SarcNetConfig::from_config(const KeyValueConfig& kv, SarcNetConfig base) {
  SarcNetConfig c = base;
  const auto input = kv.get_int("input_size", static_cast<std::int64_t>(base.input_size));
  if (input <= 0) throw ConfigError("input_size must be positive");
  c.input_size = static_cast<std::size_t>(input);
  c.stage_widths = fixed_list(kv, "stage_widths", base.stage_widths);
  const auto embed = kv.get_int("embed_dim", static_cast<std::int64_t>(base.embed_dim));
  if (embed <= 0) throw ConfigError("embed_dim must be positive");
  c.embed_dim = static_cast<std::size_t>(embed);
  c.protocol = parse_protocol(kv.get_string("protocol", std::string(protocol_name(base.protocol))));
  c.feature_widths = fixed_list(kv, "feature_widths", base.feature_widths);
  if (kv.contains("head_widths")) {
    c.head_widths = fixed_list(kv, "head_widths", base.head_widths);
  } else if (c.embed_dim != base.embed_dim) {
    c.head_widths = {c.embed_dim, std::max<std::size_t>(1, c.embed_dim / 2), 8, 1};
  }
  c.seed = kv.get_u64("seed", base.seed);
  c.validate();
  return c;
}

void SarcNetConfig::write_to(KeyValueConfig& kv) const {
  kv.set("input_size", std::to_string(input_size));
  kv.set("stage_widths", list_text(stage_widths));
  kv.set("embed_dim", std::to_string(embed_dim));
  kv.set("protocol", std::string(protocol_name(protocol)));
  kv.set("feature_widths", list_text(feature_widths));
  kv.set("head_widths", list_text(head_widths));
  kv.set("seed", std::to_string(seed));
}

namespace {

template <typename T>
LinearLayer<T> make_linear(std::size_t in, std::size_t out) {
  return {BasicTensor<T>(Shape{out, in}), BasicTensor<T>(Shape{out})};
}

template <typename T>
ConvBn<T> make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                    std::size_t padding) {
  ConvBn<T> c;
  c.weight = BasicTensor<T>(Shape{out, in, k, k});
  c.bn.gamma = BasicTensor<T>::full(Shape{out}, T(1));
  c.bn.beta = BasicTensor<T>(Shape{out});
  c.bn.stats = BatchNormStats<T>(out);
  c.stride = stride;
  c.padding = padding;
  return c;
}

template <typename T>
BasicSarcNetParams<T> skeleton(const SarcNetConfig& config) {
  config.validate();
  BasicSarcNetParams<T> p;
  p.config = config;
  const auto& w = config.stage_widths;
  p.backbone.stem = make_conv<T>(3, w[0], 7, 2, 3);
  std::size_t in = w[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t out = w[s];
    const std::size_t stride = s == 0 ? 1 : 2;
    auto& b0 = p.backbone.stages[s][0];
    b0.conv1 = make_conv<T>(in, out, 3, stride, 1);
    b0.conv2 = make_conv<T>(out, out, 3, 1, 1);
    if (stride != 1 || in != out) b0.projection = make_conv<T>(in, out, 1, stride, 0);
    auto& b1 = p.backbone.stages[s][1];
    b1.conv1 = make_conv<T>(out, out, 3, 1, 1);
    b1.conv2 = make_conv<T>(out, out, 3, 1, 1);
    in = out;
  }
  const std::size_t e = config.embed_dim;
  p.backbone.neck = {make_linear<T>(w[3], w[3] / 2), make_linear<T>(w[3] / 2, 2 * e),
                     make_linear<T>(2 * e, e)};
  const auto& f = config.feature_widths;
  p.feature_branch = {make_linear<T>(config.feature_dim(), f[0]), make_linear<T>(f[0], f[1]),
                      make_linear<T>(f[1], e)};
  const auto& h = config.head_widths;
  p.head = {make_linear<T>(2 * e, h[0]), make_linear<T>(h[0], h[1]), make_linear<T>(h[1], h[2]),
            make_linear<T>(h[2], h[3])};
  return p;
}

template <typename T, typename Tensorish, typename Fn>
void visit_conv(const std::string& prefix, ConvBn<Tensorish>& c, Fn& fn) {
  fn(prefix + ".weight", c.weight, TensorRole::kParameter);
  fn(prefix + ".bn.gamma", c.bn.gamma, TensorRole::kParameter);
  fn(prefix + ".bn.beta", c.bn.beta, TensorRole::kParameter);
  fn(prefix + ".bn.running_mean", c.bn.stats.running_mean, TensorRole::kBuffer);
  fn(prefix + ".bn.running_var", c.bn.stats.running_var, TensorRole::kBuffer);
}

template <typename T, typename Params, typename Fn>
void visit_all(Params& p, Fn& fn) {
  visit_conv<T>("backbone.stem", p.backbone.stem, fn);
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < 2; ++b) {
      auto& blk = p.backbone.stages[s][b];
      const std::string prefix =
          "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      visit_conv<T>(prefix + ".conv1", blk.conv1, fn);
      visit_conv<T>(prefix + ".conv2", blk.conv2, fn);
      if (blk.projection) visit_conv<T>(prefix + ".projection", *blk.projection, fn);
    }
  }
  auto visit_linear = [&](const std::string& prefix, auto& l) {
    fn(prefix + ".weight", l.weight, TensorRole::kParameter);
    fn(prefix + ".bias", l.bias, TensorRole::kParameter);
  };
  for (std::size_t i = 0; i < 3; ++i) visit_linear("backbone.neck.fc" + std::to_string(i + 1), p.backbone.neck[i]);
  for (std::size_t i = 0; i < 3; ++i) visit_linear("feature_branch.fc" + std::to_string(i + 1), p.feature_branch[i]);
  for (std::size_t i = 0; i < 4; ++i) visit_linear("head.fc" + std::to_string(i + 1), p.head[i]);
}

// Portable uniform in [0,1) from raw 64-bit engine output.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

template <typename T>
void BasicSarcNetParams<T>::for_each_tensor(
    const std::function<void(const std::string&, BasicTensor<T>&, TensorRole)>& fn) {
  auto f = [&](const std::string& n, BasicTensor<T>& t, TensorRole r) { fn(n, t, r); };
  visit_all<T>(*this, f);
}

template <typename T>
void BasicSarcNetParams<T>::for_each_tensor(
    const std::function<void(const std::string&, const BasicTensor<T>&, TensorRole)>& fn) const {
  auto& self = const_cast<BasicSarcNetParams<T>&>(*this);
  auto f = [&](const std::string& n, BasicTensor<T>& t, TensorRole r) { fn(n, t, r); };
  visit_all<T>(self, f);
}

template <typename T>
std::vector<NamedParameter<T>> BasicSarcNetParams<T>::parameters() {
  std::vector<NamedParameter<T>> out;
  for_each_tensor([&](const std::string& n, BasicTensor<T>& t, TensorRole r) {
    if (r == TensorRole::kParameter) out.push_back({n, t});
  });
  return out;
}

template <typename T>
std::size_t BasicSarcNetParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const BasicTensor<T>& t, TensorRole r) {
    if (r == TensorRole::kParameter) n += t.numel();
  });
  return n;
}

template <typename T>
void BasicSarcNetParams<T>::zero_grad() {
  for_each_tensor([](const std::string&, BasicTensor<T>& t, TensorRole) { t.zero_grad(); });
}

template <typename T>
void BasicSarcNetParams<T>::set_requires_grad(bool on) {
  for_each_tensor([on](const std::string&, BasicTensor<T>& t, TensorRole r) {
    if (r == TensorRole::kParameter) t.set_requires_grad(on);
  });
}

template <typename T>
template <typename U>
BasicSarcNetParams<U> BasicSarcNetParams<T>::cast() const {
  BasicSarcNetParams<U> out = skeleton<U>(config);
  std::vector<const BasicTensor<T>*> src;
  for_each_tensor([&](const std::string&, const BasicTensor<T>& t, TensorRole) { src.push_back(&t); });
  std::size_t i = 0;
  out.for_each_tensor([&](const std::string&, BasicTensor<U>& t, TensorRole r) {
    const auto sv = src[i++]->values();
    auto dv = t.values();
    for (std::size_t j = 0; j < dv.size(); ++j) dv[j] = static_cast<U>(sv[j]);
    if (r == TensorRole::kParameter) t.set_requires_grad(src[i - 1]->requires_grad());
  });
  return out;
}

std::size_t expected_parameter_count(const SarcNetConfig& c) {
  auto conv = [](std::size_t k, std::size_t cin, std::size_t cout) { return cout * cin * k * k + 2 * cout; };
  auto lin = [](std::size_t in, std::size_t out) { return in * out + out; };
  const auto& w = c.stage_widths;
  std::size_t n = conv(7, 3, w[0]);
  std::size_t in = w[0];
  for (std::size_t s = 0; s < 4; ++s) {
    const std::size_t ch = w[s];
    n += conv(3, in, ch) + 3 * conv(3, ch, ch);
    if (s > 0 || in != ch) n += conv(1, in, ch);
    in = ch;
  }
  const std::size_t e = c.embed_dim;
  n += lin(w[3], w[3] / 2) + lin(w[3] / 2, 2 * e) + lin(2 * e, e);
  n += lin(c.feature_dim(), c.feature_widths[0]) + lin(c.feature_widths[0], c.feature_widths[1]) +
       lin(c.feature_widths[1], e);
  const auto& h = c.head_widths;
  n += lin(2 * e, h[0]) + lin(h[0], h[1]) + lin(h[1], h[2]) + lin(h[2], h[3]);
  return n;
}

template <typename T>
LayerCounts count_layers(const BasicSarcNetParams<T>& params) {
  LayerCounts c;
  c.main_path_convolutions = 1;
  for (const auto& stage : params.backbone.stages) {
    for (const auto& blk : stage) {
      c.main_path_convolutions += 2;
      if (blk.projection) ++c.projection_convolutions;
    }
  }
  c.pooling_layers = 1;
  c.backbone_linear = params.backbone.neck.size();
  c.feature_linear = params.feature_branch.size();
  c.head_linear = params.head.size();
  return c;
}

template <typename T>
BasicSarcNetParams<T> init_params(const SarcNetConfig& config) {
  BasicSarcNetParams<T> p = skeleton<T>(config);
  std::mt19937_64 rng(config.seed);
  p.for_each_tensor([&](const std::string& name, BasicTensor<T>& t, TensorRole role) {
    if (role != TensorRole::kParameter || t.rank() < 2) return;
    (void)name;
    const double fan_in = static_cast<double>(t.numel() / t.extent(0));
    // Kaiming-uniform with negative slope sqrt(5): gain sqrt(1/3), bound 1/sqrt(fan_in).
    const double bound = 1.0 / std::sqrt(fan_in);
    for (auto& v : t.values()) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
  });
  p.set_requires_grad(true);
  return p;
}

namespace {

template <typename T>
BasicTensor<T> conv_bn(const BasicTensor<T>& x, ConvBn<T>& c, Mode mode) {
  return batchnorm2d(conv2d(x, c.weight, c.stride, c.padding), c.bn.gamma, c.bn.beta, c.bn.stats, mode);
}

template <typename T>
BasicTensor<T> basic_block(const BasicTensor<T>& x, BasicBlock<T>& blk, Mode mode) {
  auto out = relu(conv_bn(x, blk.conv1, mode));
  out = conv_bn(out, blk.conv2, mode);
  const auto shortcut = blk.projection ? conv_bn(x, *blk.projection, mode) : x;
  return relu(add(out, shortcut));
}

template <typename T>
BasicTensor<T> mlp(BasicTensor<T> x, const LinearLayer<T>* layers, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    x = linear(x, layers[i].weight, layers[i].bias);
    if (i + 1 < count) x = relu(x);
  }
  return x;
}

}  // namespace

template <typename T>
BasicTensor<T> backbone_trunk(const BasicTensor<T>& images, BasicSarcNetParams<T>& params, Mode mode) {
  const std::size_t s = params.config.input_size;
  const Shape& shape = images.shape();
  if (shape.size() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s) {
    throw DimensionError("backbone expects images of shape [B,3," + std::to_string(s) + "," +
                         std::to_string(s) + "], got " + shape_str(shape));
  }
  return backbone_stages(images, params, mode, 0, params.backbone.stages.size());
}

template <typename T>
BasicTensor<T> backbone_stages(const BasicTensor<T>& x, BasicSarcNetParams<T>& params, Mode mode,
                               std::size_t begin, std::size_t end) {
  auto& stages = params.backbone.stages;
  if (begin > end || end > stages.size()) {
    throw DimensionError("backbone stage range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside 0.." + std::to_string(stages.size()));
  }
  BasicTensor<T> y = x;
  if (begin == 0) y = max_pool2d(relu(conv_bn(x, params.backbone.stem, mode)), 3, 2, 1);
  for (std::size_t s = begin; s < end; ++s) {
    for (auto& blk : stages[s]) y = basic_block(y, blk, mode);
  }
  return y;
}

template <typename T>
BasicTensor<T> backbone_neck(const BasicTensor<T>& stage_output, const BasicSarcNetParams<T>& params) {
  const std::size_t width = params.config.stage_widths[3];
  if (stage_output.rank() != 4 || stage_output.extent(1) != width) {
    throw DimensionError("backbone neck expects [B," + std::to_string(width) + ",h,w], got " +
                         shape_str(stage_output.shape()));
  }
  auto pooled = reshape(global_avg_pool2d(stage_output), Shape{stage_output.extent(0), width});
  return mlp(pooled, params.backbone.neck.data(), params.backbone.neck.size());
}

template <typename T>
BasicTensor<T> backbone_forward(const BasicTensor<T>& images, BasicSarcNetParams<T>& params, Mode mode) {
  return backbone_neck(backbone_trunk(images, params, mode), params);
}

template <typename T>
BasicTensor<T> feature_branch_forward(const BasicTensor<T>& features, const BasicSarcNetParams<T>& params) {
  const std::size_t f = params.config.feature_dim();
  if (features.rank() != 2 || features.extent(1) != f) {
    throw DimensionError("feature branch expects [B," + std::to_string(f) + "], got " +
                         shape_str(features.shape()));
  }
  return mlp(features, params.feature_branch.data(), params.feature_branch.size());
}

template <typename T>
BasicTensor<T> fuse_and_head(const BasicTensor<T>& image_embedding,
                             const BasicTensor<T>& feature_embedding,
                             const BasicSarcNetParams<T>& params) {
  const std::size_t e = params.config.embed_dim;
  if (image_embedding.rank() != 2 || feature_embedding.rank() != 2 ||
      image_embedding.extent(1) != e || feature_embedding.extent(1) != e) {
    throw DimensionError("fusion head expects two [B," + std::to_string(e) + "] embeddings, got " +
                         shape_str(image_embedding.shape()) + " and " +
                         shape_str(feature_embedding.shape()));
  }
  return mlp(concat_columns(image_embedding, feature_embedding), params.head.data(), params.head.size());
}

template <typename T>
BasicTensor<T> sarcnet_forward(const BasicTensor<T>& images, const BasicTensor<T>& features,
                               BasicSarcNetParams<T>& params, Mode mode) {
  if (images.rank() < 1 || features.rank() < 1 || images.extent(0) != features.extent(0)) {
    throw DimensionError("image batch " + shape_str(images.shape()) + " and feature batch " +
                         shape_str(features.shape()) + " disagree");
  }
  const auto img = backbone_forward(images, params, mode);
  const auto feat = feature_branch_forward(features, params);
  return fuse_and_head(img, feat, params);
}

#define SARC_INSTANTIATE(T)                                                                       \
  template struct BasicSarcNetParams<T>;                                                          \
  template LayerCounts count_layers(const BasicSarcNetParams<T>&);                                \
  template BasicSarcNetParams<T> init_params<T>(const SarcNetConfig&);                            \
  template BasicTensor<T> backbone_trunk(const BasicTensor<T>&, BasicSarcNetParams<T>&, Mode);    \
  template BasicTensor<T> backbone_stages(const BasicTensor<T>&, BasicSarcNetParams<T>&, Mode,      \
                                          std::size_t, std::size_t);                              \
  template BasicTensor<T> backbone_neck(const BasicTensor<T>&, const BasicSarcNetParams<T>&);     \
  template BasicTensor<T> backbone_forward(const BasicTensor<T>&, BasicSarcNetParams<T>&, Mode);  \
  template BasicTensor<T> feature_branch_forward(const BasicTensor<T>&,                           \
                                                 const BasicSarcNetParams<T>&);                   \
  template BasicTensor<T> fuse_and_head(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                        const BasicSarcNetParams<T>&);                            \
  template BasicTensor<T> sarcnet_forward(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                          BasicSarcNetParams<T>&, Mode);

SARC_INSTANTIATE(float)
SARC_INSTANTIATE(double)
#undef SARC_INSTANTIATE

template BasicSarcNetParams<double> BasicSarcNetParams<float>::cast<double>() const;
template BasicSarcNetParams<float> BasicSarcNetParams<double>::cast<float>() const;
template BasicSarcNetParams<float> BasicSarcNetParams<float>::cast<float>() const;

}  // namespace sarc
