#pragma once

// Feature extractor f, label classifier g and domain discriminator h.
//
//   f: [B, L] -> conv(1->10) relu drop -> conv(10->10) relu drop ->
//      conv(10->10) relu drop -> flatten -> dense(->256) relu drop
//   g: dense(256->256) relu -> dense(256->K)  (softmax applied by the caller)
//   h: dense(W->512) relu -> dense(512->2),   W = 256 or 256*K

#include <cstdint>
#include <map>
#include <string>

#include "synfault/checkpoint.hpp"
#include "synfault/dsp.hpp"
#include "synfault/optim.hpp"
#include "synfault/random.hpp"
#include "synfault/tensor.hpp"

namespace synfault::model {

using nn::Graph;
using nn::Tensor;
using nn::Var;

/// What the discriminator sees: features alone, or features conditioned on
/// class predictions through the per-row outer product.
enum class DiscriminatorInput { Features, Conditional };

inline std::string to_string(DiscriminatorInput m) { return m == DiscriminatorInput::Features ? "features" : "conditional"; }

inline DiscriminatorInput discriminator_input_from_string(const std::string& s) {
  if (s == "features") return DiscriminatorInput::Features;
  if (s == "conditional") return DiscriminatorInput::Conditional;
  throw ParameterError("unknown discriminator input '" + s + "'");
}

struct ModelConfig {
  std::size_t input_length = dsp::kSpectrumLength;
  std::size_t classes = 4;
  std::size_t conv_layers = 3;
  std::size_t conv_channels = 10;
  std::size_t kernel = 3;
  std::size_t feature_width = 256;
  std::size_t classifier_hidden = 256;
  std::size_t discriminator_hidden = 512;
  double dropout_rate = 0.5;
  DiscriminatorInput discriminator_input = DiscriminatorInput::Features;

  std::size_t conv_output_length() const { return input_length - conv_layers * (kernel - 1); }
  std::size_t flat_width() const { return conv_channels * conv_output_length(); }
  std::size_t discriminator_width() const {
    return discriminator_input == DiscriminatorInput::Features ? feature_width : feature_width * classes;
  }

  void validate() const {
    detail::require(classes >= 2, "need at least two classes");
    detail::require(conv_layers >= 1 && conv_channels >= 1 && kernel >= 1, "empty convolution stack");
    detail::require(input_length > conv_layers * (kernel - 1), "input too short for the convolution stack");
    detail::require(feature_width >= 1 && classifier_hidden >= 1 && discriminator_hidden >= 1, "layer widths must be positive");
    detail::require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
  }

  std::map<std::string, std::string> header() const {
    return {{"input_length", std::to_string(input_length)},
            {"classes", std::to_string(classes)},
            {"conv_layers", std::to_string(conv_layers)},
            {"conv_channels", std::to_string(conv_channels)},
            {"kernel", std::to_string(kernel)},
            {"feature_width", std::to_string(feature_width)},
            {"classifier_hidden", std::to_string(classifier_hidden)},
            {"discriminator_hidden", std::to_string(discriminator_hidden)},
            {"dropout_rate", std::to_string(dropout_rate)},
            {"discriminator_input", to_string(discriminator_input)}};
  }

  static ModelConfig from_header(const std::map<std::string, std::string>& h) {
    auto get = [&](const char* k) -> const std::string& {
      auto it = h.find(k);
      if (it == h.end()) throw FormatError(std::string("checkpoint header lacks ") + k);
      return it->second;
    };
    auto num = [&](const char* k) {
      try {
        return static_cast<std::size_t>(std::stoull(get(k)));
      } catch (const std::logic_error&) {
        throw FormatError(std::string("checkpoint header field ") + k + " is not a number");
      }
    };
    ModelConfig c;
    c.input_length = num("input_length");
    c.classes = num("classes");
    c.conv_layers = num("conv_layers");
    c.conv_channels = num("conv_channels");
    c.kernel = num("kernel");
    c.feature_width = num("feature_width");
    c.classifier_hidden = num("classifier_hidden");
    c.discriminator_hidden = num("discriminator_hidden");
    c.dropout_rate = std::stod(get("dropout_rate"));
    c.discriminator_input = discriminator_input_from_string(get("discriminator_input"));
    c.validate();
    return c;
  }
};

template <std::floating_point T>
class Model {
 public:
  explicit Model(ModelConfig config, std::uint64_t seed = 0) : config_(config) {
    config_.validate();
    Rng rng = make_rng(seed, 0x30, 0);
    std::size_t in_ch = 1;
    for (std::size_t i = 0; i < config_.conv_layers; ++i) {
      const std::string base = "extractor/conv" + std::to_string(i);
      auto& w = params_.add(base + "/w", {config_.conv_channels, in_ch, config_.kernel});
      params_.add(base + "/b", {config_.conv_channels});
      nn::init_uniform_fan_in(w, in_ch * config_.kernel, rng);
      in_ch = config_.conv_channels;
    }
    add_dense("extractor/dense", config_.flat_width(), config_.feature_width, rng);
    add_dense("classifier/hidden", config_.feature_width, config_.classifier_hidden, rng);
    add_dense("classifier/out", config_.classifier_hidden, config_.classes, rng);
    add_dense("discriminator/hidden", config_.discriminator_width(), config_.discriminator_hidden, rng);
    add_dense("discriminator/out", config_.discriminator_hidden, 2, rng);
  }

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& params() { return params_; }
  const nn::ParameterStore<T>& params() const { return params_; }

  /// x: [B, L] or [B, 1, L] spectra -> [B, feature_width].
  template <class R>
  Var<T> features(Var<T> x, bool training, R& rng) {
    const auto& s = x.shape();
    const bool ok = (s.size() == 2 && s[1] == config_.input_length) ||
                    (s.size() == 3 && s[1] == 1 && s[2] == config_.input_length);
    if (!ok) {
      throw ShapeError("features: expected [B, " + std::to_string(config_.input_length) + "] input, got " + nn::shape_str(s));
    }
    Graph<T>& g = *x.graph;
    Var<T> h = s.size() == 2 ? nn::reshape(x, {s[0], 1, s[1]}) : x;
    for (std::size_t i = 0; i < config_.conv_layers; ++i) {
      const std::string base = "extractor/conv" + std::to_string(i);
      h = nn::conv1d(h, g.param(params_.at(base + "/w")), g.param(params_.at(base + "/b")));
      h = nn::dropout(nn::relu(h), config_.dropout_rate, training, rng);
    }
    h = apply_dense("extractor/dense", nn::flatten(h));
    return nn::dropout(nn::relu(h), config_.dropout_rate, training, rng);
  }

  /// Features without dropout (inference).
  Var<T> features(Var<T> x) {
    Rng unused(0);
    return features(x, false, unused);
  }

  Var<T> classifier_logits(Var<T> f) {
    require_width(f, config_.feature_width, "classifier");
    return apply_dense("classifier/out", nn::relu(apply_dense("classifier/hidden", f)));
  }

  /// Class probabilities [B, K].
  Var<T> classify(Var<T> f) { return nn::softmax(classifier_logits(f)); }

  Var<T> discriminator_logits(Var<T> z) {
    require_width(z, config_.discriminator_width(), "discriminator");
    return apply_dense("discriminator/out", nn::relu(apply_dense("discriminator/hidden", z)));
  }

  /// Domain probabilities [B, 2] (column 0 source, column 1 target).
  Var<T> discriminate(Var<T> z) { return nn::softmax(discriminator_logits(z)); }

  nn::Checkpoint checkpoint(std::map<std::string, std::string> extra = {}) const {
    auto header = config_.header();
    header.merge(extra);
    return nn::snapshot(params_, std::move(header));
  }

  static Model from_checkpoint(const nn::Checkpoint& ck) {
    Model m(ModelConfig::from_header(ck.header));
    nn::restore(ck, m.params_);
    return m;
  }

 private:
  template <class R>
  void add_dense(const std::string& name, std::size_t in, std::size_t out, R& rng) {
    auto& w = params_.add(name + "/w", {out, in});
    params_.add(name + "/b", {out});
    nn::init_uniform_fan_in(w, in, rng);
  }

  Var<T> apply_dense(const std::string& name, Var<T> x) {
    Graph<T>& g = *x.graph;
    return nn::dense(x, g.param(params_.at(name + "/w")), g.param(params_.at(name + "/b")));
  }

  static void require_width(Var<T> v, std::size_t width, const char* who) {
    const auto& s = v.shape();
    if (s.size() != 2 || s[1] != width) {
      throw ShapeError(std::string(who) + ": expected [B, " + std::to_string(width) + "] input, got " + nn::shape_str(s));
    }
  }

  ModelConfig config_;
  nn::ParameterStore<T> params_;
};

/// Packs rows of equal-length spectra into a [B, L] tensor.
template <std::floating_point T, class Rows>
Tensor<T> batch_tensor(const Rows& rows, std::size_t width) {
  Tensor<T> t({rows.size(), width});
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != width) throw ShapeError("batch_tensor: row length differs");
    for (std::size_t c = 0; c < width; ++c) t[r * width + c] = static_cast<T>(row[c]);
    ++r;
  }
  return t;
}

}  // namespace synfault::model
