#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edora/adapters.hpp"
#include "edora/autograd.hpp"
#include "edora/model.hpp"

namespace edora::train {

struct TrainConfig {
  adapters::AdapterMethod method = adapters::AdapterMethod::EDoRA;
  Index rank = 4;
  double sigma = 1e-4;
  adapters::InitKind init_kind = adapters::InitKind::Svd;
  double adapter_lr = 1e-3;
  double classifier_lr = 1e-3;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 1;
  model::TaskSpec task;
  autograd::NormMode norm_mode = autograd::NormMode::Full;
};

struct RunReport {
  std::vector<double> epoch_loss;
  std::map<std::string, double> metrics;
  std::uint64_t trainable_param_count = 0;
  double wall_time_seconds = 0.0;
};

// Flat view of one named parameter together with its gradient and the
// learning rate of its group.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  const double* grad = nullptr;
  std::ptrdiff_t size = 0;
  double lr = 0.0;
};

// Adam with decoupled weight decay; moments are kept per parameter name.
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                 double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  // Throws on a non-finite gradient, naming the parameter.
  void step(const std::vector<ParamRef>& params);
  std::uint64_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct LossGrad {
  double loss = 0.0;
  Matrix glogits;
};

// Softmax cross-entropy averaged over the batch; gradient is
// (softmax - onehot) / batch.
LossGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// Mean squared error over the single output row; used by the regression task.
LossGrad mean_squared_error(const Matrix& outputs, const Vector& targets);

double metric_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);
double metric_pearson(const Vector& x, const Vector& y);
double metric_matthews(const std::vector<int>& pred, const std::vector<int>& truth);

Index classes_for(model::TaskKind kind);
std::string primary_metric(model::TaskKind kind);

// Adapter trainables plus the classifier.
std::uint64_t count_trainable(const model::HostNet& net);

// Full fine-tuning of every host parameter in place (pretraining).
void fit_full(model::HostNet& net, const model::TaskData& task, int epochs);

// Attaches adapters per the config at all four sites, trains them together
// with the classifier, and evaluates on the eval split.
RunReport run(const TrainConfig& config, const model::HostNet& pretrained,
              model::HostNet* trained_out = nullptr);

struct AblationPair {
  std::uint64_t seed = 0;
  RunReport svd;
  RunReport random;
};

struct AblationResult {
  std::vector<AblationPair> pairs;
  std::string metric;
  double win_rate = 0.0;  // fraction of pairs where svd >= random
};

// Paired SVD-vs-random initialization study over the given seeds; dataset
// and host stay fixed, only the run seed varies. Config must be EDoRA.
AblationResult ablate_init(const TrainConfig& config, const model::HostNet& pretrained,
                           const std::vector<std::uint64_t>& seeds);

}  // namespace edora::train
