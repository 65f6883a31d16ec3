#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edora/adapters.hpp"
#include "edora/autograd.hpp"

namespace edora::model {

// The four adapter injection sites of the host block.
enum class Site { Q = 0, V = 1, AttnOut = 2, FC1 = 3 };
inline constexpr std::array<Site, 4> kAllSites = {Site::Q, Site::V, Site::AttnOut, Site::FC1};
std::string site_name(Site site);

// Single-head, single-block transformer encoder: attention with residual,
// ReLU feed-forward with residual, mean pooling, linear classifier.
struct HostNet {
  Index d = 0, h = 0, vocab = 0, classes = 0;
  Matrix embed;         // vocab x d
  Matrix wq, wk, wv, wo;  // d x d
  Matrix wfc1;          // h x d
  Matrix wfc2;          // d x h
  Matrix classifier_w;  // classes x d
  Vector classifier_b;  // classes
  std::array<std::optional<adapters::AdapterLayer>, 4> adapters;

  const std::optional<adapters::AdapterLayer>& adapter_at(Site s) const {
    return adapters[static_cast<std::size_t>(s)];
  }
  std::optional<adapters::AdapterLayer>& adapter_at(Site s) {
    return adapters[static_cast<std::size_t>(s)];
  }
};

HostNet build_host(Index d, Index h, Index vocab, Index classes, std::uint64_t seed);

enum class TaskKind { Majority, LinearTeacher, RareToken };
std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::Majority;
  Index vocab = 16;
  Index seq_len = 13;
  Index n_train = 512;
  Index n_eval = 256;
  std::uint64_t seed = 1;
  double shift = 0.0;  // in [0, 1]; distance from the pretraining distribution
};

struct Dataset {
  IntMatrix tokens;         // n x seq_len
  std::vector<int> labels;  // classification kinds
  Vector targets;           // regression kind
};

struct TaskData {
  Dataset train;
  Dataset eval;
};

TaskData make_task(const TaskSpec& spec);
void write_task_csv(const std::string& path, const Dataset& data);

// Per-sample activations kept for the hand-written backward pass.
struct SampleCache {
  Matrix h0, q, k, v;    // d x L
  Matrix probs;          // L x L, row softmax of q^T k / sqrt(d)
  Matrix attn, o, h1;    // d x L
  Matrix fc1_pre, fc1_act;  // h x L
  Matrix h2;             // d x L
  Vector pooled;         // d
};

// Logits are classes x batch. Any site with an attached adapter routes
// through the adapter forward instead of the base matmul.
Matrix host_forward(const HostNet& net, const IntMatrix& tokens);
Matrix host_forward_cached(const HostNet& net, const IntMatrix& tokens,
                           std::vector<SampleCache>* caches);

struct HostGrads {
  Matrix embed, wq, wk, wv, wo, wfc1, wfc2, classifier_w;
  Vector classifier_b;
  std::array<autograd::GradBundle, 4> adapter;

  static HostGrads zeros_like(const HostNet& net);
};

// Accumulates batch gradients given dL/dlogits. full_ft additionally fills
// the base-weight and embedding gradients (pretraining); otherwise only
// adapter parameters and the classifier receive gradients.
void host_backward(const HostNet& net, const IntMatrix& tokens,
                   const std::vector<SampleCache>& caches, const Matrix& glogits,
                   autograd::NormMode mode, bool full_ft, HostGrads& grads);

// Full fine-tuning on the base task; the result provides the frozen W0 for
// adapter experiments. Throws if the loss turns non-finite.
HostNet pretrain_then_freeze(const HostNet& net, const TaskData& base_task, int epochs);

}  // namespace edora::model
