#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "code_io.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "image_io.hpp"
#include "json_util.hpp"
#include "manifest.hpp"
#include "nn.hpp"
#include "rng.hpp"
#include "types.hpp"
#include "version.hpp"

namespace lf {

struct StudentConfig {
  int in_channels = 3;  // 3 for pairs, 6 for two-image inputs
  int resolution = 32;
  int epochs = 12;
  int batch_size = 8;
  double learning_rate = 2e-3;
  double decay_start = 0.5;  // fraction of epochs after which lr decays linearly
  double recon_weight = 1.0;
  double adversarial_weight = 0.0;
  double feature_matching_weight = 0.0;
  double disc_learning_rate = 2e-4;
  int width = 16;
  int disc_width = 16;
  int disc_scales = 2;
  std::size_t max_train_pairs = 0;  // 0 = all train-split pairs
  std::uint64_t seed = 5;

  bool adversarial() const { return adversarial_weight > 0.0 || feature_matching_weight > 0.0; }

  void validate() const {
    require(in_channels == 3 || in_channels == 6, "student.in_channels must be 3 or 6");
    require(resolution >= 4 && resolution % 4 == 0, "student.resolution must be a positive multiple of 4");
    require(epochs >= 1 && batch_size >= 1, "student.epochs and batch_size must be positive");
    require(learning_rate > 0.0 && disc_learning_rate > 0.0, "student learning rates must be positive");
    require(decay_start >= 0.0 && decay_start <= 1.0, "student.decay_start must lie in [0, 1]");
    require(recon_weight >= 0.0 && adversarial_weight >= 0.0 && feature_matching_weight >= 0.0,
            "student loss weights must be non-negative");
    require(width >= 1 && disc_width >= 1 && disc_scales >= 1 && disc_scales <= 2,
            "student widths must be positive and disc_scales 1 or 2");
  }

  Json to_json() const {
    return {{"in_channels", in_channels},
            {"resolution", resolution},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"decay_start", decay_start},
            {"recon_weight", recon_weight},
            {"adversarial_weight", adversarial_weight},
            {"feature_matching_weight", feature_matching_weight},
            {"disc_learning_rate", disc_learning_rate},
            {"width", width},
            {"disc_width", disc_width},
            {"disc_scales", disc_scales},
            {"max_train_pairs", max_train_pairs},
            {"seed", seed}};
  }

  static StudentConfig from_json(const Json& j) {
    StudentConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.resolution = j.value("resolution", c.resolution);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay_start = j.value("decay_start", c.decay_start);
    c.recon_weight = j.value("recon_weight", c.recon_weight);
    c.adversarial_weight = j.value("adversarial_weight", c.adversarial_weight);
    c.feature_matching_weight = j.value("feature_matching_weight", c.feature_matching_weight);
    c.disc_learning_rate = j.value("disc_learning_rate", c.disc_learning_rate);
    c.width = j.value("width", c.width);
    c.disc_width = j.value("disc_width", c.disc_width);
    c.disc_scales = j.value("disc_scales", c.disc_scales);
    c.max_train_pairs = j.value("max_train_pairs", c.max_train_pairs);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }
};

/// Encoder-decoder with one skip connection, coordinate input channels and a learned
/// per-pixel output bias; predicts a residual on top of the first input image scaled by a
/// learned per-channel gain.
/// forward() returns the unclamped prediction, inference clamps it to [0, 1].
template <class T>
class StudentNet {
 public:
  StudentNet(int in_channels, int height, int width, int base, std::uint64_t seed)
      : in_channels_(in_channels),
        height_(height),
        width_(width),
        enc1_("enc1", in_channels + 2, base, 3, 1, 1),
        enc2_("enc2", base, 2 * base, 4, 2, 1),
        mid_("mid", 2 * base, 2 * base, 3, 1, 1),
        dec1_("dec1", 3 * base, base, 3, 1, 1),
        out_("out", base, 3, 3, 1, 1),
        pos_bias_("pos_bias", static_cast<std::size_t>(3) * height * width),
        skip_gain_("skip_gain", 3) {
    std::fill(skip_gain_.value.begin(), skip_gain_.value.end(), T(1));
    require_shape(height % 2 == 0 && width % 2 == 0, "StudentNet: resolution must be even");
    Rng rng(seed, 0, 0x5e7);
    enc1_.init(rng);
    enc2_.init(rng);
    mid_.init(rng);
    dec1_.init(rng);
    out_.init(rng, 0.1);
    base_ = base;
  }

  int in_channels() const { return in_channels_; }

  nn::Tensor<T> forward(const nn::Tensor<T>& x) {
    require_shape(x.c == in_channels_ && x.h == height_ && x.w == width_, "StudentNet: input shape mismatch");
    const auto h1 = act1_.forward(enc1_.forward(nn::concat_channels(x, coords(x.n))));
    const auto h2 = act2_.forward(enc2_.forward(h1));
    const auto h3 = act3_.forward(mid_.forward(h2));
    const auto h4 = act4_.forward(dec1_.forward(nn::concat_channels(nn::upsample2x(h3), h1)));
    auto pre = out_.forward(h4);
    for (int i = 0; i < x.n; ++i) {
      T* p = pre.sample(i);
      const T* base_image = x.sample(i);
      for (std::size_t k = 0; k < pre.sample_size(); ++k)
        p[k] += skip_gain_.value[k / pre.plane()] * base_image[k] + pos_bias_.value[k];
    }
    input_ = x;
    return pre;
  }

  void backward(const nn::Tensor<T>& grad_pre) {
    for (int i = 0; i < grad_pre.n; ++i)
      for (std::size_t k = 0; k < grad_pre.sample_size(); ++k) {
        pos_bias_.grad[k] += grad_pre.sample(i)[k];
        skip_gain_.grad[k / grad_pre.plane()] += grad_pre.sample(i)[k] * input_.sample(i)[k];
      }
    const auto g4 = dec1_.backward(act4_.backward(out_.backward(grad_pre)));
    const auto g_up = nn::slice_channels(g4, 0, 2 * base_);
    auto g1 = nn::slice_channels(g4, 2 * base_, base_);
    const auto g2 = enc2_.backward(act2_.backward(mid_.backward(act3_.backward(nn::upsample2x_backward(g_up)))));
    for (std::size_t k = 0; k < g1.size(); ++k) g1.data[k] += g2.data[k];
    enc1_.backward(act1_.backward(g1));
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto* conv : {&enc1_, &enc2_, &mid_, &dec1_, &out_})
      for (auto* p : conv->parameters()) out.push_back(p);
    out.push_back(&pos_bias_);
    out.push_back(&skip_gain_);
    return out;
  }

 private:
  nn::Tensor<T> coords(int n) const {
    nn::Tensor<T> c(n, 2, height_, width_);
    for (int i = 0; i < n; ++i)
      for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) {
          c.at(i, 0, y, x) = static_cast<T>(2.0 * (x + 0.5) / width_ - 1.0);
          c.at(i, 1, y, x) = static_cast<T>(2.0 * (y + 0.5) / height_ - 1.0);
        }
    return c;
  }

  int in_channels_, height_, width_, base_ = 16;
  nn::Conv2d<T> enc1_, enc2_, mid_, dec1_, out_;
  nn::LeakyRelu<T> act1_, act2_, act3_, act4_;
  nn::Parameter<T> pos_bias_, skip_gain_;
  nn::Tensor<T> input_;
};

/// Conditional PatchGAN discriminator; also returns its hidden activations for the
/// feature-matching loss.
template <class T>
class PatchDiscriminator {
 public:
  struct Output {
    nn::Tensor<T> logits;
    std::vector<nn::Tensor<T>> features;
  };

  PatchDiscriminator(const std::string& name, int in_channels, int base, Rng& rng)
      : c1_(name + ".c1", in_channels, base, 4, 2, 1),
        c2_(name + ".c2", base, 2 * base, 4, 2, 1),
        c3_(name + ".c3", 2 * base, 1, 3, 1, 1) {
    c1_.init(rng);
    c2_.init(rng);
    c3_.init(rng);
  }

  Output forward(const nn::Tensor<T>& x) {
    Output out;
    out.features.push_back(a1_.forward(c1_.forward(x)));
    out.features.push_back(a2_.forward(c2_.forward(out.features[0])));
    out.logits = c3_.forward(out.features[1]);
    return out;
  }

  /// `grad_features` may be empty (no feature-matching term).
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_logits, const std::vector<nn::Tensor<T>>& grad_features) {
    auto g2 = c3_.backward(grad_logits);
    if (!grad_features.empty())
      for (std::size_t k = 0; k < g2.size(); ++k) g2.data[k] += grad_features[1].data[k];
    auto g1 = c2_.backward(a2_.backward(g2));
    if (!grad_features.empty())
      for (std::size_t k = 0; k < g1.size(); ++k) g1.data[k] += grad_features[0].data[k];
    return c1_.backward(a1_.backward(g1));
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto* conv : {&c1_, &c2_, &c3_})
      for (auto* p : conv->parameters()) out.push_back(p);
    return out;
  }

 private:
  nn::Conv2d<T> c1_, c2_, c3_;
  nn::LeakyRelu<T> a1_, a2_;
};

/// Discriminators at full and half resolution.
template <class T>
class MultiScaleDiscriminator {
 public:
  MultiScaleDiscriminator(int in_channels, int base, int scales, std::uint64_t seed) {
    Rng rng(seed, 1, 0xd15c);
    for (int s = 0; s < scales; ++s) discs_.emplace_back("disc" + std::to_string(s), in_channels, base, rng);
  }

  int scales() const { return static_cast<int>(discs_.size()); }

  typename PatchDiscriminator<T>::Output forward(int scale, const nn::Tensor<T>& x) {
    return discs_[scale].forward(scale == 0 ? x : nn::avgpool2x(x));
  }

  nn::Tensor<T> backward(int scale, const nn::Tensor<T>& grad_logits, const std::vector<nn::Tensor<T>>& grad_features) {
    auto g = discs_[scale].backward(grad_logits, grad_features);
    return scale == 0 ? g : nn::avgpool2x_backward(g);
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto& d : discs_)
      for (auto* p : d.parameters()) out.push_back(p);
    return out;
  }

 private:
  std::vector<PatchDiscriminator<T>> discs_;
};

struct LossValue {
  double value = 0.0;
};

/// Mean absolute error; writes d(loss)/d(pred) * weight into `grad` (accumulating).
template <class T>
double l1_loss(const nn::Tensor<T>& pred, const nn::Tensor<T>& target, nn::Tensor<T>* grad, double weight = 1.0) {
  require_shape(pred.same_shape(target), "l1_loss: shape mismatch");
  double sum = 0.0;
  const double scale = weight / static_cast<double>(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = static_cast<double>(pred.data[k]) - static_cast<double>(target.data[k]);
    sum += std::abs(d);
    if (grad && d != 0.0) grad->data[k] += static_cast<T>(d > 0 ? scale : -scale);
  }
  return sum / static_cast<double>(pred.size());
}

/// Least-squares GAN term 0.5 * mean((x - label)^2); gradient is assigned, not accumulated.
template <class T>
double lsgan_loss(const nn::Tensor<T>& logits, double label, nn::Tensor<T>* grad, double weight = 1.0) {
  double sum = 0.0;
  if (grad) *grad = nn::Tensor<T>(logits.n, logits.c, logits.h, logits.w);
  const double n = static_cast<double>(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double d = static_cast<double>(logits.data[k]) - label;
    sum += 0.5 * d * d;
    if (grad) grad->data[k] = static_cast<T>(weight * d / n);
  }
  return sum / n;
}

struct GeneratorLosses {
  double recon = 0.0;
  double adversarial = 0.0;
  double feature_matching = 0.0;
  double total = 0.0;
};

/// Generator objective for one batch: weighted reconstruction + LSGAN + feature matching.
/// When `backprop` is set, accumulates parameter gradients of the student (and, as a
/// side effect, of the discriminator, which callers zero before their own update).
template <class T>
GeneratorLosses generator_objective(StudentNet<T>& net, MultiScaleDiscriminator<T>* disc, const nn::Tensor<T>& inputs,
                                    const nn::Tensor<T>& targets, const StudentConfig& cfg, bool backprop) {
  GeneratorLosses losses;
  const auto pred = net.forward(inputs);
  nn::Tensor<T> grad(pred.n, pred.c, pred.h, pred.w);
  losses.recon = l1_loss(pred, targets, backprop ? &grad : nullptr, cfg.recon_weight);
  losses.total = cfg.recon_weight * losses.recon;

  if (disc && cfg.adversarial()) {
    const auto real_in = nn::concat_channels(inputs, targets);
    const auto fake_in = nn::concat_channels(inputs, pred);
    const double fm_norm = 1.0 / (disc->scales() * 2.0);
    for (int s = 0; s < disc->scales(); ++s) {
      const auto real_features = disc->forward(s, real_in).features;
      const auto fake = disc->forward(s, fake_in);
      nn::Tensor<T> glogits;
      losses.adversarial += lsgan_loss(fake.logits, 1.0, &glogits, cfg.adversarial_weight);
      std::vector<nn::Tensor<T>> gfeat;
      for (std::size_t f = 0; f < fake.features.size(); ++f) {
        nn::Tensor<T> g(fake.features[f].n, fake.features[f].c, fake.features[f].h, fake.features[f].w);
        losses.feature_matching +=
            fm_norm * l1_loss(fake.features[f], real_features[f], &g, cfg.feature_matching_weight * fm_norm);
        gfeat.push_back(std::move(g));
      }
      if (backprop) {
        const auto gin = disc->backward(s, glogits, gfeat);
        const auto gimg = nn::slice_channels(gin, inputs.c, 3);
        for (std::size_t k = 0; k < grad.size(); ++k) grad.data[k] += gimg.data[k];
      }
    }
    losses.total += cfg.adversarial_weight * losses.adversarial + cfg.feature_matching_weight * losses.feature_matching;
  }
  if (backprop) net.backward(grad);
  return losses;
}

/// LSGAN discriminator objective; accumulates discriminator gradients when `backprop`.
template <class T>
double discriminator_objective(MultiScaleDiscriminator<T>& disc, const nn::Tensor<T>& inputs,
                               const nn::Tensor<T>& targets, const nn::Tensor<T>& pred, bool backprop) {
  const auto real_in = nn::concat_channels(inputs, targets);
  const auto fake_in = nn::concat_channels(inputs, pred);
  double loss = 0.0;
  for (int s = 0; s < disc.scales(); ++s) {
    for (const auto& [x, label] : {std::pair{&real_in, 1.0}, std::pair{&fake_in, 0.0}}) {
      const auto out = disc.forward(s, *x);
      nn::Tensor<T> g;
      loss += 0.5 * lsgan_loss(out.logits, label, &g, 0.5);
      if (backprop) disc.backward(s, g, {});
    }
  }
  return loss;
}

struct Example {
  std::vector<Image> inputs;
  Image target;
};

inline std::vector<std::string> input_roles(int channels) {
  return channels == 3 ? std::vector<std::string>{"source"} : std::vector<std::string>{"source_a", "source_b"};
}

/// Accepted records of `split` as (inputs, target) examples; roles must fit the channel count.
inline std::vector<Example> load_examples(const DatasetManifest& manifest, int in_channels, const std::string& split,
                                          std::size_t limit = 0) {
  const auto roles = input_roles(in_channels);
  std::vector<Example> out;
  for (const auto* rec : manifest.accepted(split)) {
    for (const auto& role : roles)
      if (!rec->roles.count(role) || !rec->roles.count("target"))
        throw Error("manifest roles are incompatible with " + std::to_string(in_channels) + " input channels");
    Example ex;
    for (const auto& role : roles) ex.inputs.push_back(read_png(manifest.resolve(rec->roles.at(role))));
    ex.target = read_png(manifest.resolve(rec->roles.at("target")));
    out.push_back(std::move(ex));
    if (limit != 0 && out.size() >= limit) break;
  }
  return out;
}

template <class T>
void write_image_to(const Image& image, T* dst) {
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) dst[c * plane + static_cast<std::size_t>(y) * image.width + x] = static_cast<T>(image.at(y, x, c));
}

template <class T>
nn::Tensor<T> pack_inputs(std::span<const Example* const> batch, int in_channels, int res) {
  nn::Tensor<T> t(static_cast<int>(batch.size()), in_channels, res, res);
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t k = 0; k < batch[i]->inputs.size(); ++k)
      write_image_to(batch[i]->inputs[k], t.sample(static_cast<int>(i)) + k * 3 * t.plane());
  return t;
}

template <class T>
nn::Tensor<T> pack_targets(std::span<const Example* const> batch, int res) {
  nn::Tensor<T> t(static_cast<int>(batch.size()), 3, res, res);
  for (std::size_t i = 0; i < batch.size(); ++i) write_image_to(batch[i]->target, t.sample(static_cast<int>(i)));
  return t;
}

template <class T>
Image clamp_to_image(const nn::Tensor<T>& t, int sample) {
  Image img(t.h, t.w);
  const T* src = t.sample(sample);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = std::clamp(static_cast<double>(src[c * t.plane() + static_cast<std::size_t>(y) * t.w + x]), 0.0, 1.0);
  return img;
}

/// Serialized student: config snapshot, training-manifest hash and a float32 parameter blob.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  StudentConfig config;
  std::string manifest_hash;
  int epoch = 0;
  Json final_losses = Json::object();
  Json pipeline = Json::object();
  std::vector<std::string> names;
  std::vector<std::size_t> sizes;
  std::vector<float> parameters;
};

inline constexpr char kCheckpointMagic[8] = {'L', 'F', 'S', 'T', 'U', 'D', 'N', 'T'};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  Json params = Json::array();
  for (std::size_t i = 0; i < ck.names.size(); ++i) params.push_back({{"name", ck.names[i]}, {"size", ck.sizes[i]}});
  const Json header = {{"version", Checkpoint::kVersion},   {"tool_version", kToolVersion},
                       {"config", ck.config.to_json()},     {"manifest_hash", ck.manifest_hash},
                       {"epoch", ck.epoch},                 {"final_losses", ck.final_losses},
                       {"pipeline", ck.pipeline},           {"parameters", params}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, Checkpoint::kVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  detail::put_u32(out, static_cast<std::uint32_t>(ck.parameters.size()));
  for (float v : ck.parameters) detail::put_f32(out, v);
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  require(bytes.size() >= 16 && std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin()),
          "checkpoint: bad magic");
  const std::uint32_t version = detail::get_u32(bytes, 8);
  require(version == Checkpoint::kVersion, "checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t hlen = detail::get_u32(bytes, 12);
  require(16 + static_cast<std::size_t>(hlen) + 4 <= bytes.size(), "checkpoint: truncated header");
  const Json header = Json::parse(bytes.substr(16, hlen));
  require(header.at("version").get<std::uint32_t>() == version, "checkpoint: header version mismatch");
  Checkpoint ck;
  ck.config = StudentConfig::from_json(header.at("config"));
  ck.manifest_hash = header.at("manifest_hash").get<std::string>();
  ck.epoch = header.at("epoch").get<int>();
  ck.final_losses = header.at("final_losses");
  ck.pipeline = header.value("pipeline", Json::object());
  for (const auto& p : header.at("parameters")) {
    ck.names.push_back(p.at("name").get<std::string>());
    ck.sizes.push_back(p.at("size").get<std::size_t>());
  }
  std::size_t pos = 16 + hlen;
  const std::uint32_t count = detail::get_u32(bytes, pos);
  pos += 4;
  require(bytes.size() == pos + static_cast<std::size_t>(count) * 4, "checkpoint: parameter blob size mismatch");
  require(std::accumulate(ck.sizes.begin(), ck.sizes.end(), std::size_t{0}) == count,
          "checkpoint: parameter table does not match blob");
  ck.parameters.resize(count);
  for (std::uint32_t i = 0; i < count; ++i, pos += 4) ck.parameters[i] = detail::get_f32(bytes, pos);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

inline Checkpoint make_checkpoint(StudentNet<float>& net, const StudentConfig& cfg) {
  Checkpoint ck;
  ck.config = cfg;
  for (auto* p : net.parameters()) {
    ck.names.push_back(p->name);
    ck.sizes.push_back(p->value.size());
    ck.parameters.insert(ck.parameters.end(), p->value.begin(), p->value.end());
  }
  return ck;
}

inline StudentNet<float> net_from_checkpoint(const Checkpoint& ck) {
  const auto& c = ck.config;
  StudentNet<float> net(c.in_channels, c.resolution, c.resolution, c.width, c.seed);
  std::size_t pos = 0, idx = 0;
  for (auto* p : net.parameters()) {
    require(idx < ck.names.size() && ck.names[idx] == p->name && ck.sizes[idx] == p->value.size(),
            "checkpoint: parameter layout does not match the student architecture");
    std::copy(ck.parameters.begin() + pos, ck.parameters.begin() + pos + p->value.size(), p->value.begin());
    pos += p->value.size();
    ++idx;
  }
  require(idx == ck.names.size(), "checkpoint: extra parameters");
  return net;
}

/// Feed-forward student loaded from a checkpoint. infer() is const and reentrant.
class Student {
 public:
  explicit Student(const Checkpoint& ck) : config_(ck.config), net_(net_from_checkpoint(ck)) {}

  Image infer(std::span<const Image> inputs) const {
    const auto roles = input_roles(config_.in_channels);
    require_shape(inputs.size() == roles.size(), "infer: checkpoint expects " + std::to_string(roles.size()) +
                                                     " input image(s), got " + std::to_string(inputs.size()));
    Example ex;
    for (const auto& img : inputs) {
      require_shape(img.height == config_.resolution && img.width == config_.resolution,
                    "infer: input resolution does not match checkpoint");
      ex.inputs.push_back(img);
    }
    const Example* batch[] = {&ex};
    StudentNet<float> net = net_;
    const auto pred = net.forward(pack_inputs<float>(batch, config_.in_channels, config_.resolution));
    return clamp_to_image(pred, 0);
  }

  const StudentConfig& config() const { return config_; }

 private:
  StudentConfig config_;
  StudentNet<float> net_;
};

inline Image infer_student(const Checkpoint& ck, std::span<const Image> inputs) { return Student(ck).infer(inputs); }

struct EpochStats {
  int epoch = 0;
  double recon = 0.0;
  double adversarial = 0.0;
  double feature_matching = 0.0;
  double discriminator = 0.0;
  double learning_rate = 0.0;
};

struct HoldoutMetrics {
  std::size_t count = 0;
  double l1 = 0.0;
  double psnr = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  HoldoutMetrics holdout;
  double wall_clock_seconds = 0.0;
  std::size_t train_pairs = 0;

  Json to_json() const {
    Json e = Json::array();
    for (const auto& s : epochs)
      e.push_back({{"epoch", s.epoch},
                   {"recon", s.recon},
                   {"adversarial", s.adversarial},
                   {"feature_matching", s.feature_matching},
                   {"discriminator", s.discriminator},
                   {"learning_rate", s.learning_rate}});
    return {{"epochs", e},
            {"holdout", {{"count", holdout.count}, {"l1", holdout.l1}, {"psnr", holdout.psnr}}},
            {"wall_clock_seconds", wall_clock_seconds},
            {"train_pairs", train_pairs},
            {"tool_version", kToolVersion}};
  }
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

inline HoldoutMetrics evaluate_student(const Student& student, const std::vector<Example>& examples) {
  HoldoutMetrics m;
  for (const auto& ex : examples) {
    const Image out = student.infer(ex.inputs);
    m.l1 += mean_abs_diff(out, ex.target);
    m.psnr += std::min(psnr(out, ex.target), 100.0);
    ++m.count;
  }
  if (m.count > 0) {
    m.l1 /= m.count;
    m.psnr /= m.count;
  }
  return m;
}

/// Train one student on the train split of `manifest`; holdout metrics use its holdout split.
/// Deterministic for a given seed.
inline TrainResult train_student(const DatasetManifest& manifest, const StudentConfig& cfg,
                                 const Json& pipeline = Json::object()) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto train = load_examples(manifest, cfg.in_channels, "train", cfg.max_train_pairs);
  require(!train.empty(), "train_student: manifest has no accepted train pairs");
  const auto holdout = load_examples(manifest, cfg.in_channels, "holdout");
  for (const auto& ex : train)
    require_shape(ex.target.height == cfg.resolution && ex.target.width == cfg.resolution,
                  "train_student: image resolution does not match student.resolution");

  StudentNet<float> net(cfg.in_channels, cfg.resolution, cfg.resolution, cfg.width, cfg.seed);
  nn::Adam<float> opt(net.parameters(), cfg.learning_rate);
  std::optional<MultiScaleDiscriminator<float>> disc;
  std::optional<nn::Adam<float>> disc_opt;
  if (cfg.adversarial()) {
    disc.emplace(cfg.in_channels + 3, cfg.disc_width, cfg.disc_scales, cfg.seed);
    disc_opt.emplace(disc->parameters(), cfg.disc_learning_rate);
  }

  TrainReport report;
  report.train_pairs = train.size();
  std::vector<std::size_t> order(train.size());
  const int decay_from = static_cast<int>(std::floor(cfg.decay_start * cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr_scale = 1.0;
    if (epoch >= decay_from) lr_scale = static_cast<double>(cfg.epochs - epoch) / (cfg.epochs - decay_from + 1);
    opt.set_lr(cfg.learning_rate * lr_scale);
    if (disc_opt) disc_opt->set_lr(cfg.disc_learning_rate * lr_scale);

    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(cfg.seed, static_cast<std::uint64_t>(epoch), 0xba7c).shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = opt.lr();
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k) batch.push_back(&train[order[k]]);
      const auto inputs = pack_inputs<float>(batch, cfg.in_channels, cfg.resolution);
      const auto targets = pack_targets<float>(batch, cfg.resolution);

      if (disc) {
        const auto pred = net.forward(inputs);
        disc_opt->zero_grad();
        stats.discriminator += discriminator_objective(*disc, inputs, targets, pred, true);
        disc_opt->step();
      }
      opt.zero_grad();
      const auto losses = generator_objective(net, disc ? &*disc : nullptr, inputs, targets, cfg, true);
      if (!std::isfinite(losses.total))
        throw Error("train_student: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batches));
      opt.step();
      stats.recon += losses.recon;
      stats.adversarial += losses.adversarial;
      stats.feature_matching += losses.feature_matching;
      ++batches;
    }
    stats.recon /= batches;
    stats.adversarial /= batches;
    stats.feature_matching /= batches;
    stats.discriminator /= batches;
    report.epochs.push_back(stats);
  }

  TrainResult result;
  result.checkpoint = make_checkpoint(net, cfg);
  result.checkpoint.manifest_hash = manifest_hash(manifest);
  result.checkpoint.epoch = cfg.epochs;
  result.checkpoint.pipeline = pipeline;
  const auto& last = report.epochs.back();
  result.checkpoint.final_losses = {{"recon", last.recon},
                                    {"adversarial", last.adversarial},
                                    {"feature_matching", last.feature_matching},
                                    {"discriminator", last.discriminator}};
  report.holdout = evaluate_student(Student(result.checkpoint), holdout);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.report = std::move(report);
  return result;
}

}  // namespace lf
