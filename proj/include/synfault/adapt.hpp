#pragma once

// Adversarial domain adaptation on top of model::Model.
//
// Every step draws one labeled source batch and one unlabeled target batch of
// the same size. The classifier loss sees the source only. The domain loss
// sees both, behind a gradient-reversal node (grad_scale(-lambda_d)) placed
// right after the features, so one backward pass trains the discriminator to
// separate domains and the extractor to confuse it.
//
// Discriminator input per method:
//   SourceOnly            none
//   DANN                  f(x)
//   Conditional           f(x) (x) yhat            yhat = softmax(g(f(x))), detached
//   AugmentedConditional  source as Conditional; target mixed within the batch:
//                         e~ = l e + (1-l) e[perm], y~ = l yhat + (1-l) yhat[perm],
//                         z~ = e~ (x) y~,  l ~ Beta(alpha, alpha), one l per batch

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synfault/dsp.hpp"
#include "synfault/metrics.hpp"
#include "synfault/model.hpp"
#include "synfault/optim.hpp"
#include "synfault/random.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace synfault::adapt {

using model::Model;
using nn::Graph;
using nn::Tensor;
using nn::Var;

enum class Method { SourceOnly, DANN, Conditional, AugmentedConditional };

inline constexpr std::array<Method, 4> kAllMethods{Method::SourceOnly, Method::DANN, Method::Conditional,
                                                   Method::AugmentedConditional};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::SourceOnly: return "source-only";
    case Method::DANN: return "dann";
    case Method::Conditional: return "conditional";
    case Method::AugmentedConditional: return "proposed";
  }
  return "?";
}

inline Method method_from_string(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "source-only" || s == "sourceonly") return Method::SourceOnly;
  if (s == "dann") return Method::DANN;
  if (s == "conditional") return Method::Conditional;
  if (s == "proposed" || s == "augmented-conditional" || s == "augmentedconditional") return Method::AugmentedConditional;
  throw ParameterError("unknown method '" + s + "' (expected source-only, dann, conditional or proposed)");
}

inline model::DiscriminatorInput discriminator_input_for(Method m) {
  return m == Method::Conditional || m == Method::AugmentedConditional ? model::DiscriminatorInput::Conditional
                                                                      : model::DiscriminatorInput::Features;
}

/// Row-major [n, width] spectra with optional labels (-1 = unknown).
struct SpectrumSet {
  std::size_t width = dsp::kSpectrumLength;
  std::vector<float> values;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * width, width}; }

  void push_back(std::span<const double> spectrum, int label) {
    if (spectrum.size() != width) throw ShapeError("spectrum length " + std::to_string(spectrum.size()) + " != " + std::to_string(width));
    for (double v : spectrum) values.push_back(static_cast<float>(v));
    labels.push_back(label);
  }

  bool fully_labeled() const {
    return std::all_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
  }

  /// Copy with every label replaced by -1.
  SpectrumSet unlabeled() const {
    SpectrumSet s = *this;
    std::fill(s.labels.begin(), s.labels.end(), -1);
    return s;
  }

  template <std::floating_point T>
  Tensor<T> gather(std::span<const std::size_t> idx) const {
    Tensor<T> t({idx.size(), width});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const float* src = values.data() + idx[r] * width;
      std::copy(src, src + width, t.data.begin() + static_cast<std::ptrdiff_t>(r * width));
    }
    return t;
  }

  static SpectrumSet from_spectra(const std::vector<dsp::EnvelopeSpectrum>& spectra, bool keep_labels = true) {
    SpectrumSet s;
    for (const auto& e : spectra) {
      s.push_back(e.values, keep_labels && e.label ? static_cast<int>(class_index(*e.label)) : -1);
    }
    return s;
  }
};

struct TrainConfig {
  Method method = Method::AugmentedConditional;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double lambda_d = 1.0;
  bool lambda_ramp = false;  // 2 / (1 + exp(-10 p)) - 1 over training progress p
  double mixup_alpha = 1.0;
  bool symmetric_mixup = false;  // also mix the source side
  std::uint64_t seed = 0;
  double dropout_rate = 0.5;
  std::size_t classes = 4;

  void validate() const {
    detail::require(epochs >= 1, "epochs must be >= 1");
    detail::require(batch_size >= 2, "batch_size must be >= 2");
    detail::require(lr > 0.0, "lr must be positive");
    detail::require(lambda_d >= 0.0, "lambda_d must be >= 0");
    detail::require(mixup_alpha > 0.0, "mixup_alpha must be positive");
    detail::require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
    detail::require(classes >= 2, "need at least two classes");
  }
};

/// Domain-loss weight at training progress p in [0, 1].
inline double lambda_at(const TrainConfig& cfg, double progress) {
  if (!cfg.lambda_ramp) return cfg.lambda_d;
  return cfg.lambda_d * (2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0);
}

// RNG sub-streams of TrainConfig::seed. Kept separate so that switching the
// method never changes the source-side randomness.
namespace stream {
inline constexpr std::uint64_t kSourceOrder = 0x41;
inline constexpr std::uint64_t kTargetOrder = 0x42;
inline constexpr std::uint64_t kDropoutSource = 0x43;
inline constexpr std::uint64_t kDropoutTarget = 0x44;
inline constexpr std::uint64_t kMixup = 0x45;
inline constexpr std::uint64_t kMixupSource = 0x46;
inline constexpr std::uint64_t kModelInit = 0x47;
}  // namespace stream

/// Per-row outer product e_b (x) y_b, feature-major (index i*K + k).
template <std::floating_point T>
Var<T> multilinear_map(Var<T> e, Var<T> y) {
  return nn::outer(e, y);
}

template <std::floating_point T>
struct MixupBatch {
  Var<T> e_tilde;
  Tensor<T> y_tilde;
  Var<T> z_tilde;
  double lambda = 1.0;
  std::vector<std::size_t> perm;
};

/// Mixes rows with a shuffled copy of the batch at a given lambda.
template <std::floating_point T>
MixupBatch<T> mixup_with(Var<T> e, const Tensor<T>& y_hat, double lambda, std::vector<std::size_t> perm) {
  const std::size_t b = e.shape().at(0);
  if (b < 2) throw ParameterError("mixup needs a batch of at least 2");
  if (y_hat.rank() != 2 || y_hat.dim(0) != b) throw ShapeError("mixup: pseudo-labels do not match the batch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("mixup lambda must lie in [0, 1]");
  const std::size_t k = y_hat.dim(1);
  MixupBatch<T> out;
  out.lambda = lambda;
  out.perm = std::move(perm);
  const T l = static_cast<T>(lambda);
  out.e_tilde = nn::mix_rows<T>(e, out.perm, l);
  out.y_tilde = Tensor<T>({b, k});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < k; ++c) out.y_tilde[r * k + c] = l * y_hat[r * k + c] + (T(1) - l) * y_hat[out.perm[r] * k + c];
  out.z_tilde = multilinear_map(out.e_tilde, e.graph->constant(out.y_tilde));
  return out;
}

/// Draws lambda ~ Beta(alpha, alpha) and a uniform permutation from rng.
template <std::floating_point T, class R>
MixupBatch<T> mixup_augment(Var<T> e, const Tensor<T>& y_hat, double alpha, R& rng) {
  const std::size_t b = e.shape().at(0);
  if (b < 2) throw ParameterError("mixup needs a batch of at least 2");
  if (!(alpha > 0.0)) throw ParameterError("mixup alpha must be positive");
  const double lambda = sample_beta(rng, alpha, alpha);
  std::vector<std::size_t> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return mixup_with(e, y_hat, lambda, std::move(perm));
}

template <std::floating_point T>
struct StepLoss {
  Var<T> total;
  Var<T> clf;
  std::optional<Var<T>> disc;
  std::optional<double> mixup_lambda;
};

/// Builds the combined objective for one step. Dropout and mixup randomness
/// come from sub-streams of cfg.seed indexed by `step`.
template <std::floating_point T>
StepLoss<T> combined_loss(Graph<T>& g, Model<T>& m, const Tensor<T>& xs, std::span<const int> ys, const Tensor<T>& xt,
                          const TrainConfig& cfg, double lambda_d, std::uint64_t step) {
  if (xs.rank() != 2 || xs.dim(0) == 0) throw ShapeError("empty source batch");
  if (ys.size() != xs.dim(0)) throw ShapeError("source labels do not match the batch");
  Rng drop_s = make_rng(cfg.seed, stream::kDropoutSource, step);
  auto fs = m.features(g.constant(xs), true, drop_s);
  auto logits_s = m.classifier_logits(fs);
  StepLoss<T> out;
  out.clf = nn::softmax_cross_entropy<T>(logits_s, ys);
  out.total = out.clf;
  if (cfg.method == Method::SourceOnly) return out;

  if (xt.rank() != 2 || xt.dim(0) == 0) throw ShapeError("empty target batch");
  Rng drop_t = make_rng(cfg.seed, stream::kDropoutTarget, step);
  auto ft = m.features(g.constant(xt), true, drop_t);
  const T reverse = static_cast<T>(-lambda_d);
  auto rs = nn::grad_scale(fs, reverse);
  auto rt = nn::grad_scale(ft, reverse);

  Var<T> zs = rs, zt = rt;
  if (cfg.method != Method::DANN) {
    auto yhat_s = nn::detach(nn::softmax(logits_s));
    auto yhat_t = nn::detach(m.classify(ft));
    if (cfg.method == Method::AugmentedConditional) {
      Rng mix = make_rng(cfg.seed, stream::kMixup, step);
      auto mt = mixup_augment(rt, yhat_t.value(), cfg.mixup_alpha, mix);
      zt = mt.z_tilde;
      out.mixup_lambda = mt.lambda;
      if (cfg.symmetric_mixup) {
        Rng mix_s = make_rng(cfg.seed, stream::kMixupSource, step);
        zs = mixup_augment(rs, yhat_s.value(), cfg.mixup_alpha, mix_s).z_tilde;
      } else {
        zs = multilinear_map(rs, yhat_s);
      }
    } else {
      zs = multilinear_map(rs, yhat_s);
      zt = multilinear_map(rt, yhat_t);
    }
  }
  std::vector<int> domain(xs.dim(0) + xt.dim(0), 1);
  std::fill(domain.begin(), domain.begin() + static_cast<std::ptrdiff_t>(xs.dim(0)), 0);
  out.disc = nn::softmax_cross_entropy<T>(m.discriminator_logits(nn::concat_rows(zs, zt)), domain);
  out.total = nn::add(out.clf, *out.disc);
  return out;
}

/// Class probabilities for every row of `data` (inference mode).
template <std::floating_point T>
std::vector<std::vector<T>> predict_proba(Model<T>& m, const SpectrumSet& data, std::size_t batch = 256) {
  std::vector<std::vector<T>> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.resize(std::min(batch, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Graph<T> g;
    auto p = m.classify(m.features(g.constant(data.gather<T>(idx))));
    const std::size_t k = p.shape()[1];
    for (std::size_t r = 0; r < idx.size(); ++r) out.emplace_back(p.value().data.begin() + r * k, p.value().data.begin() + (r + 1) * k);
  }
  return out;
}

template <std::floating_point T>
std::vector<int> predict(Model<T>& m, const SpectrumSet& data, std::size_t batch = 256) {
  std::vector<int> out;
  for (const auto& p : predict_proba(m, data, batch)) out.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
  return out;
}

template <std::floating_point T>
metrics::ConfusionMatrix confusion(Model<T>& m, const SpectrumSet& data) {
  if (!data.fully_labeled()) throw ParameterError("evaluation data must be fully labeled");
  const auto pred = predict(m, data);
  return metrics::ConfusionMatrix::from_predictions(data.labels, pred, m.config().classes);
}

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double clf_loss = 0.0;
  double disc_loss = 0.0;
  double lambda_d = 0.0;
  std::optional<metrics::Report> eval;

  std::string to_string(const TrainConfig& cfg) const {
    std::ostringstream os;
    os.precision(6);
    os << "epoch=" << epoch << " method=" << adapt::to_string(cfg.method) << " seed=" << cfg.seed << " steps=" << steps
       << " clf_loss=" << clf_loss << " disc_loss=" << disc_loss << " lambda_d=" << lambda_d;
    if (eval) {
      os << " balanced_accuracy=" << eval->balanced_accuracy << " accuracy=" << eval->accuracy << " f1_macro=" << eval->f1_macro
         << " f1_micro=" << eval->f1_micro << " kappa=" << eval->kappa;
    }
    return os.str();
  }
};

template <std::floating_point T>
struct TrainResult {
  Model<T> model;
  std::vector<EpochLog> log;
};

struct TrainHooks {
  const SpectrumSet* eval = nullptr;   // labeled evaluation split
  std::size_t eval_every = 1;          // epochs between evaluations (final epoch always)
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(std::size_t step, double clf, double disc)> on_step;
  std::size_t max_steps = 0;           // stop early after this many steps (0 = no limit)
};

// Each step allocates and frees the same few large buffers. glibc hands
// those back to the kernel by default and the next step pays for fresh
// page faults; keeping them on the heap roughly halves step time.
inline void keep_large_buffers() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

/// Endless stream of indices in [0, n), reshuffled on every pass.
class CyclicSampler {
 public:
  CyclicSampler(std::size_t n, std::uint64_t seed, std::uint64_t stream_id) : n_(n), seed_(seed), stream_(stream_id) {}

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    while (out.size() < count) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng = make_rng(seed_, stream_, pass_++);
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }

  std::size_t n_;
  std::uint64_t seed_, stream_, pass_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

template <std::floating_point T = float>
TrainResult<T> train(const SpectrumSet& source, const SpectrumSet& target, const TrainConfig& cfg, const TrainHooks& hooks = {},
                     model::ModelConfig arch = {}) {
  cfg.validate();
  keep_large_buffers();
  if (source.empty()) throw ParameterError("source dataset is empty");
  if (cfg.method != Method::SourceOnly && target.empty()) throw ParameterError("target dataset is empty");
  if (!source.fully_labeled()) throw ParameterError("every source sample needs a label");
  for (int l : source.labels) {
    if (static_cast<std::size_t>(l) >= cfg.classes) throw ParameterError("source label out of range");
  }
  if (!target.empty() && target.width != source.width) throw ShapeError("source and target spectra differ in length");
  arch.input_length = source.width;
  arch.classes = cfg.classes;
  arch.dropout_rate = cfg.dropout_rate;
  arch.discriminator_input = discriminator_input_for(cfg.method);

  TrainResult<T> res{Model<T>(arch, derive_seed(cfg.seed, stream::kModelInit)), {}};
  Model<T>& m = res.model;
  auto adam = nn::make_adam_state(m.params(), nn::AdamConfig{.lr = cfg.lr});

  const std::size_t n = source.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t steps_per_epoch = n / batch + (n % batch >= 2 ? 1 : 0);
  const std::size_t total_steps = std::max<std::size_t>(1, steps_per_epoch * cfg.epochs);
  CyclicSampler target_sampler(std::max<std::size_t>(target.size(), 1), cfg.seed, stream::kTargetOrder);

  std::uint64_t step = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_rng(cfg.seed, stream::kSourceOrder, epoch);
    std::shuffle(order.begin(), order.end(), shuffle);

    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t b = std::min(batch, n - start);
      if (b < 2) break;
      std::span<const std::size_t> idx(order.data() + start, b);
      std::vector<int> ys(b);
      for (std::size_t i = 0; i < b; ++i) ys[i] = source.labels[idx[i]];
      const Tensor<T> xs = source.gather<T>(idx);
      Tensor<T> xt;
      if (cfg.method != Method::SourceOnly) {
        const auto tidx = target_sampler.next(b);
        xt = target.gather<T>(tidx);
      }
      const double lam = lambda_at(cfg, static_cast<double>(step) / static_cast<double>(total_steps));

      Graph<T> g(m.params());
      auto loss = combined_loss(g, m, xs, ys, xt, cfg, lam, step);
      const double clf = loss.clf.value()[0];
      const double disc = loss.disc ? loss.disc->value()[0] : 0.0;
      g.backward(loss.total);
      nn::adam_step(m.params(), adam);

      log.clf_loss += clf;
      log.disc_loss += disc;
      log.lambda_d = lam;
      ++log.steps;
      ++step;
      if (hooks.on_step) hooks.on_step(step, clf, disc);
      if (hooks.max_steps && step >= hooks.max_steps) break;
    }
    if (log.steps) {
      log.clf_loss /= static_cast<double>(log.steps);
      log.disc_loss /= static_cast<double>(log.steps);
    }
    const bool last = epoch == cfg.epochs || (hooks.max_steps && step >= hooks.max_steps);
    if (hooks.eval && (last || (hooks.eval_every && epoch % hooks.eval_every == 0))) {
      log.eval = metrics::evaluate(confusion(m, *hooks.eval));
    }
    if (hooks.on_epoch) hooks.on_epoch(log);
    res.log.push_back(std::move(log));
    if (last) break;
  }
  return res;
}

}  // namespace synfault::adapt
