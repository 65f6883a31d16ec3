#include "edora/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace edora::train {

using adapters::AdapterMethod;
using linalg::RngState;
using model::HostNet;
using model::Site;

void AdamW::step(const std::vector<ParamRef>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const ParamRef& p : params) {
    auto& [m, v] = moments_[p.name];
    if (m.empty()) {
      m.assign(static_cast<std::size_t>(p.size), 0.0);
      v.assign(static_cast<std::size_t>(p.size), 0.0);
    }
    for (std::ptrdiff_t i = 0; i < p.size; ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("adamw_step: non-finite gradient for parameter '" + p.name +
                                 "'");
      }
      auto& mi = m[static_cast<std::size_t>(i)];
      auto& vi = v[static_cast<std::size_t>(i)];
      mi = beta1_ * mi + (1.0 - beta1_) * g;
      vi = beta2_ * vi + (1.0 - beta2_) * g * g;
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.value[i] -= p.lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p.value[i]);
    }
  }
}

LossGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  const Index classes = logits.rows();
  const Index batch = logits.cols();
  if (static_cast<Index>(labels.size()) != batch) {
    throw std::invalid_argument("cross_entropy: label count " + std::to_string(labels.size()) +
                                " != batch " + std::to_string(batch));
  }
  LossGrad out;
  out.glogits.resize(classes, batch);
  for (Index s = 0; s < batch; ++s) {
    const int label = labels[static_cast<std::size_t>(s)];
    if (label < 0 || label >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                  " out of range [0, " + std::to_string(classes) + ")");
    }
    const double mx = logits.col(s).maxCoeff();
    double sum = 0.0;
    for (Index c = 0; c < classes; ++c) {
      sum += std::exp(logits(c, s) - mx);
    }
    const double log_sum = std::log(sum) + mx;
    out.loss += (log_sum - logits(label, s)) / static_cast<double>(batch);
    for (Index c = 0; c < classes; ++c) {
      const double p = std::exp(logits(c, s) - log_sum);
      out.glogits(c, s) = (p - (c == label ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  return out;
}

LossGrad mean_squared_error(const Matrix& outputs, const Vector& targets) {
  if (outputs.rows() != 1 || outputs.cols() != targets.size()) {
    throw std::invalid_argument("mean_squared_error: expected 1x" +
                                std::to_string(targets.size()) + " outputs");
  }
  const Index batch = targets.size();
  LossGrad out;
  out.glogits.resize(1, batch);
  for (Index s = 0; s < batch; ++s) {
    const double diff = outputs(0, s) - targets(s);
    out.loss += diff * diff / static_cast<double>(batch);
    out.glogits(0, s) = 2.0 * diff / static_cast<double>(batch);
  }
  return out;
}

double metric_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw std::invalid_argument("metric_accuracy: inputs must be non-empty and equal length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    hits += pred[i] == truth[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double metric_pearson(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("metric_pearson: need equal lengths >= 2");
  }
  const double mx = x.mean();
  const double my = y.mean();
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double dx = x(i) - mx;
    const double dy = y(i) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("metric_pearson: zero variance input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double metric_matthews(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.empty() || pred.size() != truth.size()) {
    throw std::invalid_argument("metric_matthews: inputs must be non-empty and equal length");
  }
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != 0 && pred[i] != 1) {
      throw std::invalid_argument("metric_matthews: predictions must be binary");
    }
    if (truth[i] != 0 && truth[i] != 1) {
      throw std::invalid_argument("metric_matthews: labels must be binary");
    }
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    else if (pred[i] == 0 && truth[i] == 0) ++tn;
    else if (pred[i] == 1 && truth[i] == 0) ++fp;
    else ++fn;
  }
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) {
    return 0.0;
  }
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

Index classes_for(model::TaskKind kind) {
  return kind == model::TaskKind::LinearTeacher ? 1 : 2;
}

std::string primary_metric(model::TaskKind kind) {
  switch (kind) {
    case model::TaskKind::Majority: return "accuracy";
    case model::TaskKind::LinearTeacher: return "pearson";
    case model::TaskKind::RareToken: return "matthews";
  }
  throw std::invalid_argument("primary_metric: bad enum value");
}

namespace {

void shuffle_indices(std::vector<Index>& idx, RngState& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

IntMatrix gather_tokens(const IntMatrix& tokens, const std::vector<Index>& idx, Index from,
                        Index count) {
  IntMatrix out(count, tokens.cols());
  for (Index i = 0; i < count; ++i) {
    out.row(i) = tokens.row(idx[static_cast<std::size_t>(from + i)]);
  }
  return out;
}

LossGrad batch_loss(const Matrix& logits, const model::Dataset& data,
                    const std::vector<Index>& idx, Index from, Index count) {
  if (!data.labels.empty()) {
    std::vector<int> labels(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
      labels[static_cast<std::size_t>(i)] =
          data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(from + i)])];
    }
    return cross_entropy(logits, labels);
  }
  Vector targets(count);
  for (Index i = 0; i < count; ++i) {
    targets(i) = data.targets(idx[static_cast<std::size_t>(from + i)]);
  }
  return mean_squared_error(logits, targets);
}

void append_matrix_ref(std::vector<ParamRef>& refs, const std::string& name, Matrix& value,
                       const Matrix& grad, double lr) {
  refs.push_back({name, value.data(), grad.data(), value.size(), lr});
}

// Trains the given parameter set; returns the mean training loss per epoch.
// The ref builder runs after each backward pass so gradient storage may be
// recreated every step.
template <typename BuildRefs>
std::vector<double> optimize(HostNet& net, const model::Dataset& data, int epochs,
                             int batch_size, autograd::NormMode mode, bool full_ft,
                             RngState& order_rng, AdamW& opt, BuildRefs&& build_refs) {
  const Index n = data.tokens.rows();
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::vector<double> epoch_loss;
  std::vector<model::SampleCache> caches;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_indices(idx, order_rng);
    double total_loss = 0.0;
    for (Index from = 0; from < n; from += batch_size) {
      const Index count = std::min<Index>(batch_size, n - from);
      const IntMatrix tokens = gather_tokens(data.tokens, idx, from, count);
      const Matrix logits = model::host_forward_cached(net, tokens, &caches);
      LossGrad lg = batch_loss(logits, data, idx, from, count);
      if (!std::isfinite(lg.loss)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      }
      total_loss += lg.loss * static_cast<double>(count);
      model::HostGrads grads = model::HostGrads::zeros_like(net);
      model::host_backward(net, tokens, caches, lg.glogits, mode, full_ft, grads);
      std::vector<ParamRef> refs = build_refs(net, grads);
      opt.step(refs);
    }
    epoch_loss.push_back(total_loss / static_cast<double>(n));
  }
  return epoch_loss;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  RngState rng(seed ^ (tag * 0x9E3779B97F4A7C15ull));
  return rng.next_u64();
}

Matrix eval_logits(const HostNet& net, const IntMatrix& tokens) {
  // Chunked so eval batches reuse bounded cache memory.
  const Index n = tokens.rows();
  Matrix logits(net.classes, n);
  constexpr Index kChunk = 64;
  for (Index from = 0; from < n; from += kChunk) {
    const Index count = std::min(kChunk, n - from);
    logits.middleCols(from, count) = model::host_forward(net, tokens.middleRows(from, count));
  }
  return logits;
}

std::map<std::string, double> evaluate(const HostNet& net, const model::Dataset& eval,
                                       model::TaskKind kind) {
  const Matrix logits = eval_logits(net, eval.tokens);
  std::map<std::string, double> metrics;
  if (kind == model::TaskKind::LinearTeacher) {
    metrics["pearson"] = metric_pearson(logits.row(0).transpose(), eval.targets);
    return metrics;
  }
  std::vector<int> pred(static_cast<std::size_t>(logits.cols()));
  for (Index s = 0; s < logits.cols(); ++s) {
    Index best = 0;
    logits.col(s).maxCoeff(&best);
    pred[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  metrics["accuracy"] = metric_accuracy(pred, eval.labels);
  if (kind == model::TaskKind::RareToken) {
    metrics["matthews"] = metric_matthews(pred, eval.labels);
  }
  return metrics;
}

std::vector<std::string> trainable_keys(AdapterMethod method) {
  switch (method) {
    case AdapterMethod::LoRA: return {"a", "b"};
    case AdapterMethod::DoRA: return {"a", "b", "m"};
    case AdapterMethod::LoRAXS: return {"r"};
    case AdapterMethod::EDoRA: return {"m", "r"};
  }
  throw std::invalid_argument("trainable_keys: bad enum value");
}

double* layer_param(adapters::AdapterLayer& layer, const std::string& key, std::ptrdiff_t& size) {
  if (key == "a") { size = layer.a.size(); return layer.a.data(); }
  if (key == "b") { size = layer.b.size(); return layer.b.data(); }
  if (key == "r") { size = layer.r_mat->size(); return layer.r_mat->data(); }
  if (key == "m") { size = layer.m_vec->size(); return layer.m_vec->data(); }
  throw std::invalid_argument("layer_param: unknown key '" + key + "'");
}

}  // namespace

std::uint64_t count_trainable(const HostNet& net) {
  std::uint64_t total = 0;
  for (Site site : model::kAllSites) {
    const auto& ad = net.adapter_at(site);
    if (ad.has_value()) {
      total += adapters::trainable_count(ad->method,
                                         static_cast<std::uint64_t>(ad->w0.rows()),
                                         static_cast<std::uint64_t>(ad->w0.cols()),
                                         static_cast<std::uint64_t>(ad->rank));
    }
  }
  total += static_cast<std::uint64_t>(net.classifier_w.size());
  total += static_cast<std::uint64_t>(net.classifier_b.size());
  return total;
}

void fit_full(HostNet& net, const model::TaskData& task, int epochs) {
  if (epochs < 0) {
    throw std::invalid_argument("fit_full: epochs must be >= 0");
  }
  AdamW opt;
  RngState order_rng(0xED0AED0Aull);
  constexpr double kLr = 1e-3;
  try {
    optimize(net, task.train, epochs, 32, autograd::NormMode::Full, /*full_ft=*/true,
             order_rng, opt, [](HostNet& n, model::HostGrads& g) {
               std::vector<ParamRef> refs;
               append_matrix_ref(refs, "embed", n.embed, g.embed, kLr);
               append_matrix_ref(refs, "wq", n.wq, g.wq, kLr);
               append_matrix_ref(refs, "wk", n.wk, g.wk, kLr);
               append_matrix_ref(refs, "wv", n.wv, g.wv, kLr);
               append_matrix_ref(refs, "wo", n.wo, g.wo, kLr);
               append_matrix_ref(refs, "wfc1", n.wfc1, g.wfc1, kLr);
               append_matrix_ref(refs, "wfc2", n.wfc2, g.wfc2, kLr);
               append_matrix_ref(refs, "classifier.w", n.classifier_w, g.classifier_w, kLr);
               refs.push_back({"classifier.b", n.classifier_b.data(), g.classifier_b.data(),
                               n.classifier_b.size(), kLr});
               return refs;
             });
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("pretraining diverged: ") + e.what());
  }
}

RunReport run(const TrainConfig& config, const HostNet& pretrained, HostNet* trained_out) {
  if (config.adapter_lr <= 0.0 || config.classifier_lr <= 0.0) {
    throw std::invalid_argument("run: learning rates must be positive");
  }
  if (config.epochs < 0 || config.batch_size < 1) {
    throw std::invalid_argument("run: epochs must be >= 0 and batch_size >= 1");
  }
  const auto start = std::chrono::steady_clock::now();

  HostNet net = pretrained;
  RngState init_rng(mix_seed(config.seed, 11));
  for (Site site : model::kAllSites) {
    const Matrix& w0 = site == Site::Q      ? net.wq
                       : site == Site::V    ? net.wv
                       : site == Site::AttnOut ? net.wo
                                              : net.wfc1;
    adapters::AdapterLayer layer = [&] {
      switch (config.method) {
        case AdapterMethod::LoRA: return adapters::init_lora(w0, config.rank, init_rng);
        case AdapterMethod::DoRA: return adapters::init_dora(w0, config.rank, init_rng);
        case AdapterMethod::LoRAXS: return adapters::init_loraxs(w0, config.rank, init_rng);
        case AdapterMethod::EDoRA:
          return adapters::init_edora(w0, config.rank, config.sigma, config.init_kind,
                                      init_rng);
      }
      throw std::invalid_argument("run: bad method enum");
    }();
    net.adapter_at(site) = std::move(layer);
  }

  const model::TaskData task = model::make_task(config.task);
  const std::vector<std::string> keys = trainable_keys(config.method);

  AdamW opt;
  RngState order_rng(mix_seed(config.seed, 12));
  RunReport report;
  report.epoch_loss = optimize(
      net, task.train, config.epochs, config.batch_size, config.norm_mode,
      /*full_ft=*/false, order_rng, opt, [&](HostNet& n, model::HostGrads& g) {
        std::vector<ParamRef> refs;
        for (Site site : model::kAllSites) {
          auto& ad = n.adapter_at(site);
          autograd::GradBundle& bundle = g.adapter[static_cast<std::size_t>(site)];
          for (const std::string& key : keys) {
            std::ptrdiff_t size = 0;
            double* value = layer_param(*ad, key, size);
            const Matrix& grad = bundle.at(key);
            refs.push_back({model::site_name(site) + "." + key, value, grad.data(), size,
                            config.adapter_lr});
          }
        }
        append_matrix_ref(refs, "classifier.w", n.classifier_w, g.classifier_w,
                          config.classifier_lr);
        refs.push_back({"classifier.b", n.classifier_b.data(), g.classifier_b.data(),
                        n.classifier_b.size(), config.classifier_lr});
        return refs;
      });

  report.metrics = evaluate(net, task.eval, config.task.kind);
  report.trainable_param_count = count_trainable(net);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (trained_out != nullptr) {
    *trained_out = std::move(net);
  }
  return report;
}

AblationResult ablate_init(const TrainConfig& config, const HostNet& pretrained,
                           const std::vector<std::uint64_t>& seeds) {
  if (config.method != AdapterMethod::EDoRA) {
    throw std::invalid_argument("ablate_init: config method must be edora");
  }
  AblationResult result;
  result.metric = primary_metric(config.task.kind);
  result.pairs.resize(seeds.size());
  if (seeds.empty()) {
    return result;
  }

  std::atomic<std::size_t> cursor{0};
  auto work = [&]() {
    for (std::size_t i = cursor.fetch_add(1); i < seeds.size(); i = cursor.fetch_add(1)) {
      TrainConfig svd_cfg = config;
      svd_cfg.init_kind = adapters::InitKind::Svd;
      svd_cfg.seed = seeds[i];
      TrainConfig rnd_cfg = svd_cfg;
      rnd_cfg.init_kind = adapters::InitKind::Random;
      AblationPair pair;
      pair.seed = seeds[i];
      pair.svd = run(svd_cfg, pretrained);
      pair.random = run(rnd_cfg, pretrained);
      result.pairs[i] = std::move(pair);
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(seeds.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back(work);
  }
  for (auto& t : pool) {
    t.join();
  }

  std::size_t wins = 0;
  for (const AblationPair& pair : result.pairs) {
    if (pair.svd.metrics.at(result.metric) >= pair.random.metrics.at(result.metric)) {
      ++wins;
    }
  }
  result.win_rate = static_cast<double>(wins) / static_cast<double>(result.pairs.size());
  return result;
}

}  // namespace edora::train
