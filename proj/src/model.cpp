#include "edora/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "edora/train.hpp"

namespace edora::model {

using linalg::matmul;
using linalg::RngState;

std::string site_name(Site site) {
  switch (site) {
    case Site::Q: return "q";
    case Site::V: return "v";
    case Site::AttnOut: return "attn_out";
    case Site::FC1: return "fc1";
  }
  throw std::invalid_argument("site_name: bad enum value");
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Majority: return "majority";
    case TaskKind::LinearTeacher: return "linear_teacher";
    case TaskKind::RareToken: return "rare_token";
  }
  throw std::invalid_argument("task_kind_name: bad enum value");
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "majority") return TaskKind::Majority;
  if (name == "linear_teacher") return TaskKind::LinearTeacher;
  if (name == "rare_token") return TaskKind::RareToken;
  throw std::invalid_argument("unknown task kind '" + name + "'");
}

HostNet build_host(Index d, Index h, Index vocab, Index classes, std::uint64_t seed) {
  if (d < 1 || h < 1 || vocab < 1 || classes < 1) {
    throw std::invalid_argument("build_host: all dimensions must be >= 1");
  }
  const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
  RngState rng(seed);
  HostNet net;
  net.d = d;
  net.h = h;
  net.vocab = vocab;
  net.classes = classes;
  net.embed = linalg::gaussian_matrix(vocab, d, sigma, rng);
  net.wq = linalg::gaussian_matrix(d, d, sigma, rng);
  net.wk = linalg::gaussian_matrix(d, d, sigma, rng);
  net.wv = linalg::gaussian_matrix(d, d, sigma, rng);
  net.wo = linalg::gaussian_matrix(d, d, sigma, rng);
  net.wfc1 = linalg::gaussian_matrix(h, d, sigma, rng);
  net.wfc2 = linalg::gaussian_matrix(d, h, sigma, rng);
  net.classifier_w = linalg::gaussian_matrix(classes, d, sigma, rng);
  net.classifier_b = Vector::Zero(classes);
  return net;
}

namespace {

const Matrix& base_weight(const HostNet& net, Site s) {
  switch (s) {
    case Site::Q: return net.wq;
    case Site::V: return net.wv;
    case Site::AttnOut: return net.wo;
    case Site::FC1: return net.wfc1;
  }
  throw std::invalid_argument("base_weight: bad site");
}

Matrix& base_grad_slot(HostGrads& g, Site s) {
  switch (s) {
    case Site::Q: return g.wq;
    case Site::V: return g.wv;
    case Site::AttnOut: return g.wo;
    case Site::FC1: return g.wfc1;
  }
  throw std::invalid_argument("base_grad_slot: bad site");
}

Matrix site_forward(const HostNet& net, Site s, const Matrix& x) {
  const auto& ad = net.adapter_at(s);
  if (ad.has_value()) {
    return adapters::forward(*ad, x);
  }
  return matmul(base_weight(net, s), x);
}

Matrix site_backward(const HostNet& net, Site s, const Matrix& x, const Matrix& gy,
                     autograd::NormMode mode, bool full_ft, HostGrads& grads) {
  const auto& ad = net.adapter_at(s);
  if (ad.has_value()) {
    autograd::AdapterGrads g = autograd::backward_adapter(*ad, x, gy, mode);
    autograd::GradBundle& bundle = grads.adapter[static_cast<std::size_t>(s)];
    for (auto& [key, grad] : g.params) {
      auto it = bundle.find(key);
      if (it == bundle.end()) {
        bundle.emplace(key, std::move(grad));
      } else {
        it->second += grad;
      }
    }
    return std::move(g.gx);
  }
  if (full_ft) {
    base_grad_slot(grads, s) += matmul(gy, Matrix(x.transpose()));
  }
  return matmul(Matrix(base_weight(net, s).transpose()), gy);
}

Matrix row_softmax(const Matrix& scores) {
  Matrix probs(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    const double mx = scores.row(i).maxCoeff();
    double sum = 0.0;
    for (Index j = 0; j < scores.cols(); ++j) {
      const double e = std::exp(scores(i, j) - mx);
      probs(i, j) = e;
      sum += e;
    }
    probs.row(i) /= sum;
  }
  return probs;
}

void forward_sample(const HostNet& net, const IntMatrix& tokens, Index sample,
                    SampleCache& c) {
  const Index length = tokens.cols();
  c.h0.resize(net.d, length);
  for (Index l = 0; l < length; ++l) {
    const int t = tokens(sample, l);
    if (t < 0 || t >= net.vocab) {
      throw std::invalid_argument("host_forward: token id " + std::to_string(t) +
                                  " out of range [0, " + std::to_string(net.vocab) + ")");
    }
    c.h0.col(l) = net.embed.row(t).transpose();
  }
  c.q = site_forward(net, Site::Q, c.h0);
  c.k = matmul(net.wk, c.h0);
  c.v = site_forward(net, Site::V, c.h0);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(net.d));
  Matrix scores = matmul(Matrix(c.q.transpose()), c.k) * inv_sqrt_d;
  c.probs = row_softmax(scores);
  c.attn = matmul(c.v, Matrix(c.probs.transpose()));
  c.o = site_forward(net, Site::AttnOut, c.attn);
  c.h1 = c.h0 + c.o;
  c.fc1_pre = site_forward(net, Site::FC1, c.h1);
  c.fc1_act = c.fc1_pre.cwiseMax(0.0);
  c.h2 = c.h1 + matmul(net.wfc2, c.fc1_act);
  c.pooled = Vector::Zero(net.d);
  for (Index l = 0; l < length; ++l) {
    c.pooled += c.h2.col(l);
  }
  c.pooled /= static_cast<double>(length);
}

}  // namespace

Matrix host_forward_cached(const HostNet& net, const IntMatrix& tokens,
                           std::vector<SampleCache>* caches) {
  const Index batch = tokens.rows();
  Matrix logits(net.classes, batch);
  if (caches != nullptr) {
    caches->assign(static_cast<std::size_t>(batch), SampleCache{});
  }
  SampleCache local;
  for (Index s = 0; s < batch; ++s) {
    SampleCache& c = caches ? (*caches)[static_cast<std::size_t>(s)] : local;
    forward_sample(net, tokens, s, c);
    logits.col(s) = matmul(net.classifier_w, Matrix(c.pooled)).col(0) + net.classifier_b;
  }
  return logits;
}

Matrix host_forward(const HostNet& net, const IntMatrix& tokens) {
  return host_forward_cached(net, tokens, nullptr);
}

HostGrads HostGrads::zeros_like(const HostNet& net) {
  HostGrads g;
  g.embed = Matrix::Zero(net.vocab, net.d);
  g.wq = Matrix::Zero(net.d, net.d);
  g.wk = Matrix::Zero(net.d, net.d);
  g.wv = Matrix::Zero(net.d, net.d);
  g.wo = Matrix::Zero(net.d, net.d);
  g.wfc1 = Matrix::Zero(net.h, net.d);
  g.wfc2 = Matrix::Zero(net.d, net.h);
  g.classifier_w = Matrix::Zero(net.classes, net.d);
  g.classifier_b = Vector::Zero(net.classes);
  return g;
}

void host_backward(const HostNet& net, const IntMatrix& tokens,
                   const std::vector<SampleCache>& caches, const Matrix& glogits,
                   autograd::NormMode mode, bool full_ft, HostGrads& grads) {
  const Index batch = tokens.rows();
  if (glogits.cols() != batch || static_cast<Index>(caches.size()) != batch) {
    throw std::invalid_argument("host_backward: batch size mismatch");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(net.d));
  for (Index s = 0; s < batch; ++s) {
    const SampleCache& c = caches[static_cast<std::size_t>(s)];
    const Index length = tokens.cols();
    const Matrix gz = glogits.col(s);

    grads.classifier_w += matmul(gz, Matrix(c.pooled.transpose()));
    grads.classifier_b += gz.col(0);
    const Matrix gpooled = matmul(Matrix(net.classifier_w.transpose()), gz);

    Matrix gh2(net.d, length);
    for (Index l = 0; l < length; ++l) {
      gh2.col(l) = gpooled.col(0) / static_cast<double>(length);
    }

    // feed-forward with residual
    const Matrix gfc1_act = matmul(Matrix(net.wfc2.transpose()), gh2);
    if (full_ft) {
      grads.wfc2 += matmul(gh2, Matrix(c.fc1_act.transpose()));
    }
    const Matrix relu_mask = (c.fc1_pre.array() > 0.0).cast<double>().matrix();
    const Matrix gfc1_pre = gfc1_act.cwiseProduct(relu_mask);
    Matrix gh1 = gh2 + site_backward(net, Site::FC1, c.h1, gfc1_pre, mode, full_ft, grads);

    // attention with residual
    Matrix gh0 = gh1;
    const Matrix gattn = site_backward(net, Site::AttnOut, c.attn, gh1, mode, full_ft, grads);
    const Matrix gv = matmul(gattn, c.probs);
    const Matrix gprobs = matmul(Matrix(gattn.transpose()), c.v);

    Matrix gscores(length, length);
    for (Index i = 0; i < length; ++i) {
      const double dot = gprobs.row(i).dot(c.probs.row(i));
      gscores.row(i) = c.probs.row(i).cwiseProduct((gprobs.row(i).array() - dot).matrix());
    }
    const Matrix gq = matmul(c.k, Matrix(gscores.transpose())) * inv_sqrt_d;
    const Matrix gk = matmul(c.q, gscores) * inv_sqrt_d;

    gh0 += site_backward(net, Site::Q, c.h0, gq, mode, full_ft, grads);
    if (full_ft) {
      grads.wk += matmul(gk, Matrix(c.h0.transpose()));
    }
    gh0 += matmul(Matrix(net.wk.transpose()), gk);
    gh0 += site_backward(net, Site::V, c.h0, gv, mode, full_ft, grads);

    if (full_ft) {
      for (Index l = 0; l < length; ++l) {
        grads.embed.row(tokens(s, l)) += gh0.col(l).transpose();
      }
    }
  }
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  RngState rng(seed ^ (tag * 0x9E3779B97F4A7C15ull));
  return rng.next_u64();
}

// Tokens drawn from a (possibly tilted) categorical distribution.
struct TokenSampler {
  std::vector<double> cumulative;

  TokenSampler(Index vocab, double tilt, RngState& map_rng) {
    cumulative.resize(static_cast<std::size_t>(vocab));
    double total = 0.0;
    for (auto& c : cumulative) {
      total += std::exp(tilt * map_rng.next_gaussian());
      c = total;
    }
  }

  int draw(RngState& rng) const {
    const double u = rng.next_uniform_coopen() * cumulative.back();
    for (std::size_t t = 0; t < cumulative.size(); ++t) {
      if (u < cumulative[t]) return static_cast<int>(t);
    }
    return static_cast<int>(cumulative.size()) - 1;
  }
};

std::vector<int> shifted_class_map(Index vocab, double shift, RngState& map_rng) {
  std::vector<int> cls(static_cast<std::size_t>(vocab));
  for (Index t = 0; t < vocab; ++t) {
    cls[static_cast<std::size_t>(t)] = static_cast<int>(t % 2);
  }
  std::vector<Index> perm(static_cast<std::size_t>(vocab));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = vocab - 1; i > 0; --i) {
    const Index j = static_cast<Index>(map_rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  const Index flips = static_cast<Index>(std::llround(shift * static_cast<double>(vocab)));
  for (Index i = 0; i < flips; ++i) {
    auto& c = cls[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    c = 1 - c;
  }
  return cls;
}

Dataset make_majority(const TaskSpec& spec, Index n, RngState& rng, RngState& map_rng) {
  const std::vector<int> cls = shifted_class_map(spec.vocab, spec.shift, map_rng);
  const TokenSampler sampler(spec.vocab, spec.shift * 0.5, map_rng);
  Dataset data;
  data.tokens.resize(n, spec.seq_len);
  data.labels.resize(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    int counts[2] = {0, 0};
    for (Index l = 0; l < spec.seq_len; ++l) {
      const int t = sampler.draw(rng);
      data.tokens(s, l) = t;
      ++counts[cls[static_cast<std::size_t>(t)]];
    }
    data.labels[static_cast<std::size_t>(s)] = counts[1] > counts[0] ? 1 : 0;
  }
  return data;
}

Dataset make_linear_teacher(const TaskSpec& spec, Index n, RngState& rng,
                            const Matrix& table, const Vector& teacher_base,
                            const Vector& teacher_shift) {
  Dataset data;
  data.tokens.resize(n, spec.seq_len);
  data.targets.resize(n);
  const Index k = table.cols();
  for (Index s = 0; s < n; ++s) {
    Vector mean_embed = Vector::Zero(k);
    for (Index l = 0; l < spec.seq_len; ++l) {
      const int t = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(spec.vocab));
      data.tokens(s, l) = t;
      mean_embed += table.row(t).transpose();
    }
    mean_embed /= static_cast<double>(spec.seq_len);
    data.targets(s) = (1.0 - spec.shift) * teacher_base.dot(mean_embed) +
                      spec.shift * teacher_shift.dot(mean_embed);
  }
  return data;
}

Dataset make_rare_token(const TaskSpec& spec, Index n, RngState& rng) {
  // Token 0 is the designated rare marker; base positive rate 0.1. The
  // shift knob has no effect for this kind.
  Dataset data;
  data.tokens.resize(n, spec.seq_len);
  data.labels.resize(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; ++s) {
    for (Index l = 0; l < spec.seq_len; ++l) {
      const int t = 1 + static_cast<int>(rng.next_u64() %
                                         static_cast<std::uint64_t>(spec.vocab - 1));
      data.tokens(s, l) = t;
    }
    const bool positive = rng.next_uniform_coopen() < 0.1;
    if (positive) {
      const Index pos = static_cast<Index>(rng.next_u64() %
                                           static_cast<std::uint64_t>(spec.seq_len));
      data.tokens(s, pos) = 0;
    }
    data.labels[static_cast<std::size_t>(s)] = positive ? 1 : 0;
  }
  return data;
}

}  // namespace

TaskData make_task(const TaskSpec& spec) {
  if (spec.vocab < 2 || spec.seq_len < 1 || spec.n_train < 1 || spec.n_eval < 1) {
    throw std::invalid_argument("make_task: vocab >= 2 and positive sizes required");
  }
  if (spec.shift < 0.0 || spec.shift > 1.0) {
    throw std::invalid_argument("make_task: shift must lie in [0, 1]");
  }
  RngState train_rng(mix_seed(spec.seed, 1));
  RngState eval_rng(mix_seed(spec.seed, 2));
  TaskData out;
  switch (spec.kind) {
    case TaskKind::Majority: {
      // The class map and tilt are shared between splits.
      RngState map_a(mix_seed(spec.seed, 3));
      RngState map_b(mix_seed(spec.seed, 3));
      out.train = make_majority(spec, spec.n_train, train_rng, map_a);
      out.eval = make_majority(spec, spec.n_eval, eval_rng, map_b);
      break;
    }
    case TaskKind::LinearTeacher: {
      RngState map_rng(mix_seed(spec.seed, 4));
      const Index k = 8;
      const Matrix table = linalg::gaussian_matrix(spec.vocab, k, 1.0, map_rng);
      Vector teacher_base(k), teacher_shift(k);
      for (Index i = 0; i < k; ++i) teacher_base(i) = map_rng.next_gaussian();
      for (Index i = 0; i < k; ++i) teacher_shift(i) = map_rng.next_gaussian();
      out.train = make_linear_teacher(spec, spec.n_train, train_rng, table, teacher_base,
                                      teacher_shift);
      out.eval = make_linear_teacher(spec, spec.n_eval, eval_rng, table, teacher_base,
                                     teacher_shift);
      break;
    }
    case TaskKind::RareToken: {
      out.train = make_rare_token(spec, spec.n_train, train_rng);
      out.eval = make_rare_token(spec, spec.n_eval, eval_rng);
      break;
    }
  }
  return out;
}

void write_task_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_task_csv: cannot open " + path);
  }
  char buf[40];
  for (Index s = 0; s < data.tokens.rows(); ++s) {
    for (Index l = 0; l < data.tokens.cols(); ++l) {
      if (l) out << ",";
      out << data.tokens(s, l);
    }
    if (!data.labels.empty()) {
      out << "," << data.labels[static_cast<std::size_t>(s)];
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g", data.targets(s));
      out << "," << buf;
    }
    out << "\n";
  }
}

HostNet pretrain_then_freeze(const HostNet& net, const TaskData& base_task, int epochs) {
  HostNet trained = net;
  train::fit_full(trained, base_task, epochs);
  return trained;
}

}  // namespace edora::model
