// Command-line entry point: parameter-budget analyzer, gradient checker,
// trainer, merger, initialization ablation and checkpoint inspector.
//
// Exit codes: 0 success, 1 runtime/validation failure, 2 usage error.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "edora/adapters.hpp"
#include "edora/autograd.hpp"
#include "edora/budget.hpp"
#include "edora/linalg.hpp"
#include "edora/model.hpp"
#include "edora/persist.hpp"
#include "edora/train.hpp"

namespace {

using namespace edora;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// shared experiment policy

constexpr Index kHostD = 32;
constexpr Index kHostH = 128;
constexpr Index kPretrainSamples = 1024;
constexpr int kPretrainEpochs = 20;

model::TaskSpec base_task_of(const model::TaskSpec& task) {
  model::TaskSpec base = task;
  base.shift = 0.0;
  base.n_train = kPretrainSamples;
  base.n_eval = 256;
  base.seed = task.seed ^ 0xBA5EBA5Eull;
  return base;
}

model::HostNet pretrained_host(const train::TrainConfig& cfg) {
  model::HostNet host = model::build_host(kHostD, kHostH, cfg.task.vocab,
                                          train::classes_for(cfg.task.kind), cfg.seed);
  const model::TaskData base = model::make_task(base_task_of(cfg.task));
  return model::pretrain_then_freeze(host, base, kPretrainEpochs);
}

// ---------------------------------------------------------------------------
// budget

std::vector<std::uint64_t> parse_ranks(const std::string& text) {
  std::vector<std::uint64_t> ranks;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find(',', pos);
    if (next == std::string::npos) next = text.size();
    const std::string item = text.substr(pos, next - pos);
    try {
      const long long v = std::stoll(item);
      if (v < 1) throw std::out_of_range("non-positive");
      ranks.push_back(static_cast<std::uint64_t>(v));
    } catch (const std::exception&) {
      throw UsageError("budget: bad rank '" + item + "' in --ranks");
    }
    pos = next + 1;
  }
  if (ranks.empty()) {
    throw UsageError("budget: --ranks must list at least one rank");
  }
  return ranks;
}

budget::ArchSpec resolve_arch(const std::string& arg) {
  if (std::filesystem::exists(arg)) {
    return budget::arch_from_json_file(arg);
  }
  std::string stem = std::filesystem::path(arg).stem().string();
  if (stem == "roberta_base") return budget::roberta_base_preset();
  if (stem == "gpt3_qv") return budget::gpt3_qv_preset();
  throw UsageError("budget: '" + arg + "' is neither a file nor a known preset "
                   "(roberta_base, gpt3_qv)");
}

int run_budget(const std::string& preset, std::uint64_t dim, const std::string& ranks_text,
               const std::string& arch_arg, const std::string& method_name,
               std::uint64_t rank, const std::string& format) {
  if (format != "text" && format != "csv") {
    throw UsageError("budget: --format must be text or csv");
  }
  const int modes = (preset.empty() ? 0 : 1) + (dim > 0 ? 1 : 0) + (arch_arg.empty() ? 0 : 1);
  if (modes != 1) {
    throw UsageError("budget: choose exactly one of --preset, --dim, --arch");
  }

  if (!preset.empty()) {
    if (preset != "table1") {
      throw UsageError("budget: unknown preset '" + preset + "' (expected table1)");
    }
    const auto rows = budget::table1();
    if (format == "csv") {
      std::printf("model,n,lora_r16,lora_r32,dora_r16,dora_r32\n");
      for (const auto& row : rows) {
        std::printf("%s,%" PRIu64 ",%.2f,%.2f,%.2f,%.2f\n", row.model.c_str(), row.n,
                    budget::round2(row.lora_over_edora.at(16)),
                    budget::round2(row.lora_over_edora.at(32)),
                    budget::round2(row.dora_over_edora.at(16)),
                    budget::round2(row.dora_over_edora.at(32)));
      }
    } else {
      std::printf("%-14s %6s %9s %9s %9s %9s\n", "model", "n", "lora_r16", "lora_r32",
                  "dora_r16", "dora_r32");
      for (const auto& row : rows) {
        std::printf("%-14s %6" PRIu64 " %9.2f %9.2f %9.2f %9.2f\n", row.model.c_str(), row.n,
                    budget::round2(row.lora_over_edora.at(16)),
                    budget::round2(row.lora_over_edora.at(32)),
                    budget::round2(row.dora_over_edora.at(16)),
                    budget::round2(row.dora_over_edora.at(32)));
      }
    }
    return 0;
  }

  if (dim > 0) {
    const auto ranks = parse_ranks(ranks_text);
    if (format == "csv") {
      std::printf("rank,lora_over_edora,dora_over_edora\n");
      for (std::uint64_t r : ranks) {
        std::printf("%" PRIu64 ",%.2f,%.2f\n", r, budget::round2(budget::ratio_lora_edora(dim, r)),
                    budget::round2(budget::ratio_dora_edora(dim, r)));
      }
    } else {
      for (std::uint64_t r : ranks) {
        std::printf("%.2f %.2f\n", budget::round2(budget::ratio_lora_edora(dim, r)),
                    budget::round2(budget::ratio_dora_edora(dim, r)));
      }
    }
    return 0;
  }

  // --arch mode
  if (method_name.empty() || rank == 0) {
    throw UsageError("budget: --arch mode requires --method and --rank");
  }
  adapters::AdapterMethod method;
  try {
    method = adapters::method_from_name(method_name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("budget: ") + e.what());
  }
  const budget::ArchSpec arch = resolve_arch(arch_arg);
  const std::uint64_t total = budget::count_total(arch, method, rank);
  if (format == "csv") {
    std::printf("arch,method,rank,trainable_params\n%s,%s,%" PRIu64 ",%" PRIu64 "\n",
                arch.name.c_str(), method_name.c_str(), rank, total);
  } else {
    std::printf("%" PRIu64 "\n", total);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

double probe_loss(const adapters::AdapterLayer& layer, const Matrix& x, const Matrix& probe,
                  autograd::NormMode mode, const Vector& base_norms) {
  Matrix y;
  if (mode == autograd::NormMode::Detached && layer.m_vec.has_value()) {
    const Matrix v = adapters::direction_numerator(layer);
    y = autograd::forward_decomposed_frozen(*layer.m_vec, v, x, base_norms);
  } else {
    y = adapters::forward(layer, x);
  }
  return y.cwiseProduct(probe).sum();
}

Matrix* param_slot(adapters::AdapterLayer& layer, const std::string& key) {
  if (key == "a") return &layer.a;
  if (key == "b") return &layer.b;
  if (key == "r") return layer.r_mat.has_value() ? &*layer.r_mat : nullptr;
  return nullptr;
}

std::vector<std::string> trainable_keys_of(adapters::AdapterMethod method) {
  using adapters::AdapterMethod;
  switch (method) {
    case AdapterMethod::LoRA: return {"a", "b"};
    case AdapterMethod::DoRA: return {"a", "b", "m"};
    case AdapterMethod::LoRAXS: return {"r"};
    case AdapterMethod::EDoRA: return {"m", "r"};
  }
  return {};
}

double entry_rel_err(double analytic, double fd) {
  const double scale = std::max({1e-3, std::abs(analytic), std::abs(fd)});
  return std::abs(analytic - fd) / scale;
}

int run_gradcheck(const std::string& method_name, Index m, Index n, Index rank, int seeds,
                  const std::string& mode_name) {
  if (m < 1 || n < 1) {
    throw UsageError("gradcheck: --m and --n must be >= 1");
  }
  if (rank < 1 || rank > std::min(m, n)) {
    throw UsageError("gradcheck: --rank must lie in [1, min(m, n)]");
  }
  if (seeds < 1) {
    throw UsageError("gradcheck: --seeds must be >= 1");
  }
  autograd::NormMode mode;
  if (mode_name == "full") mode = autograd::NormMode::Full;
  else if (mode_name == "detached") mode = autograd::NormMode::Detached;
  else throw UsageError("gradcheck: --mode must be full or detached");
  adapters::AdapterMethod method;
  try {
    method = adapters::method_from_name(method_name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("gradcheck: ") + e.what());
  }

  constexpr double kStep = 1e-5;
  constexpr double kTol = 1e-6;
  const Index batch = 3;
  std::map<std::string, double> worst;
  for (int s = 1; s <= seeds; ++s) {
    linalg::RngState rng(static_cast<std::uint64_t>(s) * 7919u + 13u);
    const Matrix w0 = linalg::gaussian_matrix(m, n, 1.0, rng);
    adapters::AdapterLayer layer = [&] {
      switch (method) {
        case adapters::AdapterMethod::LoRA: return adapters::init_lora(w0, rank, rng);
        case adapters::AdapterMethod::DoRA: return adapters::init_dora(w0, rank, rng);
        case adapters::AdapterMethod::LoRAXS: return adapters::init_loraxs(w0, rank, rng);
        case adapters::AdapterMethod::EDoRA:
          return adapters::init_edora(w0, rank, 1e-4, adapters::InitKind::Svd, rng);
      }
      throw UsageError("gradcheck: bad method");
    }();
    const Matrix x = linalg::gaussian_matrix(n, batch, 1.0, rng);
    const Matrix probe = linalg::gaussian_matrix(m, batch, 1.0, rng);
    const Vector base_norms = linalg::column_norms(adapters::direction_numerator(layer));

    const autograd::AdapterGrads analytic = autograd::backward_adapter(layer, x, probe, mode);
    for (const std::string& key : trainable_keys_of(method)) {
      const Matrix& grad = analytic.params.at(key);
      double key_worst = 0.0;
      auto fd_at = [&](double* cell) {
        const double saved = *cell;
        *cell = saved + kStep;
        const double up = probe_loss(layer, x, probe, mode, base_norms);
        *cell = saved - kStep;
        const double down = probe_loss(layer, x, probe, mode, base_norms);
        *cell = saved;
        return (up - down) / (2.0 * kStep);
      };
      if (key == "m") {
        for (Index j = 0; j < layer.m_vec->size(); ++j) {
          const double fd = fd_at(&(*layer.m_vec)(j));
          key_worst = std::max(key_worst, entry_rel_err(grad(j, 0), fd));
        }
      } else {
        Matrix* slot = param_slot(layer, key);
        for (Index i = 0; i < slot->size(); ++i) {
          const double fd = fd_at(slot->data() + i);
          key_worst = std::max(key_worst, entry_rel_err(grad.data()[i], fd));
        }
      }
      auto it = worst.find(key);
      if (it == worst.end() || key_worst > it->second) worst[key] = key_worst;
    }
  }

  bool pass = true;
  std::string offender;
  double offender_err = 0.0;
  for (const auto& [key, err] : worst) {
    std::printf("%s max_rel_err=%.3e\n", key.c_str(), err);
    if (err > kTol) {
      pass = false;
      if (err > offender_err) {
        offender_err = err;
        offender = key;
      }
    }
  }
  if (!pass) {
    std::fprintf(stderr, "gradcheck FAILED: worst parameter '%s' rel err %.3e > %.0e\n",
                 offender.c_str(), offender_err, kTol);
    return 1;
  }
  std::printf("gradcheck passed (%d seeds, mode %s)\n", seeds, mode_name.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train / merge / ablate / inspect

const std::map<model::Site, std::string> kBaseEntryOf = {
    {model::Site::Q, "wq"},
    {model::Site::V, "wv"},
    {model::Site::AttnOut, "wo"},
    {model::Site::FC1, "wfc1"},
};

persist::NamedMatrices host_entries(const model::HostNet& net) {
  persist::NamedMatrices entries;
  entries.emplace_back("embed", net.embed);
  entries.emplace_back("wq", net.wq);
  entries.emplace_back("wk", net.wk);
  entries.emplace_back("wv", net.wv);
  entries.emplace_back("wo", net.wo);
  entries.emplace_back("wfc1", net.wfc1);
  entries.emplace_back("wfc2", net.wfc2);
  entries.emplace_back("classifier.w", net.classifier_w);
  entries.emplace_back("classifier.b", Matrix(net.classifier_b));
  return entries;
}

persist::NamedMatrices adapter_entries(const model::HostNet& net) {
  persist::NamedMatrices entries;
  for (model::Site site : model::kAllSites) {
    const auto& ad = net.adapter_at(site);
    if (!ad.has_value()) continue;
    const std::string prefix = model::site_name(site) + ".";
    entries.emplace_back(prefix + "a", ad->a);
    entries.emplace_back(prefix + "b", ad->b);
    if (ad->r_mat.has_value()) entries.emplace_back(prefix + "r", *ad->r_mat);
    if (ad->m_vec.has_value()) entries.emplace_back(prefix + "m", Matrix(*ad->m_vec));
  }
  entries.emplace_back("classifier.w", net.classifier_w);
  entries.emplace_back("classifier.b", Matrix(net.classifier_b));
  return entries;
}

int run_train(const std::string& config_path, const std::string& out_path,
              const std::string& report_path, bool timing) {
  const train::TrainConfig cfg = persist::read_config(config_path);
  model::HostNet host = pretrained_host(cfg);
  model::HostNet trained;
  const train::RunReport report = train::run(cfg, host, &trained);

  persist::save(out_path, adapter_entries(trained), persist::Dtype::F64);
  persist::save(out_path + ".base", host_entries(host), persist::Dtype::F64);
  {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) {
      throw std::runtime_error("train: cannot open report path " + report_path);
    }
    out << persist::report_to_json(report, cfg, timing);
  }
  std::printf("train: %s", persist::report_to_json(report, cfg, false).c_str());
  if (timing) {
    std::fprintf(stderr, "wall_time_seconds=%.3f\n", report.wall_time_seconds);
  }
  return 0;
}

const Matrix& entry_named(const persist::NamedMatrices& entries, const std::string& name,
                          const std::string& which) {
  for (const auto& [key, value] : entries) {
    if (key == name) return value;
  }
  throw std::runtime_error(which + " checkpoint is missing entry '" + name + "'");
}

const Matrix* entry_named_opt(const persist::NamedMatrices& entries, const std::string& name) {
  for (const auto& [key, value] : entries) {
    if (key == name) return &value;
  }
  return nullptr;
}

int run_merge(const std::string& base_path, const std::string& adapter_path,
              const std::string& out_path) {
  const persist::NamedMatrices base = persist::load(base_path);
  const persist::NamedMatrices adapter = persist::load(adapter_path);

  persist::NamedMatrices merged = base;
  double max_dev = 0.0;
  linalg::RngState probe_rng(0x4D455247ull);
  int merged_sites = 0;
  for (model::Site site : model::kAllSites) {
    const std::string prefix = model::site_name(site) + ".";
    const Matrix* a = entry_named_opt(adapter, prefix + "a");
    if (a == nullptr) continue;
    const Matrix& w0 = entry_named(base, kBaseEntryOf.at(site), "base");
    const Matrix& b = entry_named(adapter, prefix + "b", "adapter");
    const Matrix* r = entry_named_opt(adapter, prefix + "r");
    const Matrix* m = entry_named_opt(adapter, prefix + "m");

    adapters::AdapterLayer layer;
    layer.method = m != nullptr ? (r != nullptr ? adapters::AdapterMethod::EDoRA
                                                : adapters::AdapterMethod::DoRA)
                                : (r != nullptr ? adapters::AdapterMethod::LoRAXS
                                                : adapters::AdapterMethod::LoRA);
    layer.w0 = w0;
    layer.rank = a->rows();
    layer.a = *a;
    layer.b = b;
    if (r != nullptr) layer.r_mat = *r;
    if (m != nullptr) layer.m_vec = Vector(m->col(0));

    if (layer.a.cols() != w0.cols() || layer.b.rows() != w0.rows() ||
        layer.b.cols() != layer.rank ||
        (r != nullptr && (r->rows() != layer.rank || r->cols() != layer.rank)) ||
        (m != nullptr && (m->rows() != w0.cols() || m->cols() != 1))) {
      std::fprintf(stderr,
                   "merge: adapter factors for site '%s' do not match the %td x %td base "
                   "weight (rank metadata mismatch)\n",
                   model::site_name(site).c_str(), w0.rows(), w0.cols());
      return 1;
    }

    const Matrix w_merged = adapters::merge(layer);
    const Matrix probes = linalg::gaussian_matrix(w0.cols(), 16, 1.0, probe_rng);
    const Matrix via_adapter = adapters::forward(layer, probes);
    const Matrix via_merged = linalg::matmul(w_merged, probes);
    max_dev = std::max(max_dev, (via_adapter - via_merged).cwiseAbs().maxCoeff());

    for (auto& [key, value] : merged) {
      if (key == kBaseEntryOf.at(site)) value = w_merged;
    }
    ++merged_sites;
  }
  if (merged_sites == 0) {
    std::fprintf(stderr, "merge: adapter checkpoint contains no adapter entries\n");
    return 1;
  }

  persist::save(out_path, merged, persist::Dtype::F64);
  std::printf("merged %d site(s); max probe deviation %.3e\n", merged_sites, max_dev);
  if (max_dev > 1e-10) {
    std::fprintf(stderr, "merge: verification failed, deviation %.3e exceeds 1e-10\n", max_dev);
    return 1;
  }
  return 0;
}

int run_ablate(const std::string& config_path, int n_seeds, const std::string& format) {
  if (format != "text" && format != "csv") {
    throw UsageError("ablate: --format must be text or csv");
  }
  if (n_seeds < 0) {
    throw UsageError("ablate: --seeds must be >= 0");
  }
  const train::TrainConfig cfg = persist::read_config(config_path);
  if (cfg.method != adapters::AdapterMethod::EDoRA) {
    throw UsageError("ablate: config method must be edora");
  }
  model::HostNet host = pretrained_host(cfg);
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_seeds));
  for (int i = 0; i < n_seeds; ++i) {
    seeds[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i + 1);
  }
  const train::AblationResult result = train::ablate_init(cfg, host, seeds);

  if (format == "csv") {
    std::fputs(persist::ablation_to_csv(result).c_str(), stdout);
    std::fprintf(stderr, "win_rate=%.4f\n", result.win_rate);
  } else {
    if (result.pairs.empty()) {
      std::printf("no pairs (0 seeds)\n");
      return 0;
    }
    std::printf("%-6s %12s %12s %s\n", "seed", ("svd_" + result.metric).c_str(),
                ("random_" + result.metric).c_str(), "win");
    for (const auto& pair : result.pairs) {
      const double s = pair.svd.metrics.at(result.metric);
      const double r = pair.random.metrics.at(result.metric);
      std::printf("%-6" PRIu64 " %12.6f %12.6f %d\n", pair.seed, s, r, s >= r ? 1 : 0);
    }
    std::printf("win_rate=%.4f (svd wins or ties on %zu pair(s))\n", result.win_rate,
                static_cast<std::size_t>(result.win_rate * static_cast<double>(result.pairs.size()) + 0.5));
  }
  return 0;
}

int run_inspect(const std::string& ckpt_path, const std::string& task_config,
                const std::string& split, const std::string& out_path) {
  if (ckpt_path.empty() == task_config.empty()) {
    throw UsageError("inspect: pass exactly one of --ckpt or --task");
  }
  if (!ckpt_path.empty()) {
    const auto infos = persist::list_entries(ckpt_path);
    std::printf("%-24s %5s %8s %8s\n", "name", "dtype", "rows", "cols");
    for (const auto& info : infos) {
      std::printf("%-24s %5s %8" PRIu64 " %8" PRIu64 "\n", info.name.c_str(),
                  info.dtype == persist::Dtype::F32 ? "f32" : "f64", info.rows, info.cols);
    }
    return 0;
  }
  if (out_path.empty()) {
    throw UsageError("inspect: --task mode requires --out");
  }
  if (split != "train" && split != "eval") {
    throw UsageError("inspect: --split must be train or eval");
  }
  const train::TrainConfig cfg = persist::read_config(task_config);
  const model::TaskData data = model::make_task(cfg.task);
  model::write_task_csv(out_path, split == "train" ? data.train : data.eval);
  std::printf("wrote %s split of task to %s\n", split.c_str(), out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EDoRA: weight-decomposed low-rank adaptation toolkit"};
  app.require_subcommand(1);

  // budget
  auto* budget_cmd = app.add_subcommand("budget", "parameter-budget analyzer");
  std::string preset, ranks_text = "16,32", arch_arg, method_name, format = "text";
  std::uint64_t dim = 0, rank_u = 0;
  budget_cmd->add_option("--preset", preset, "named table preset (table1)");
  budget_cmd->add_option("--dim", dim, "square weight dimension n");
  budget_cmd->add_option("--ranks", ranks_text, "comma-separated ranks (with --dim)");
  budget_cmd->add_option("--arch", arch_arg, "arch spec JSON file or preset name");
  budget_cmd->add_option("--method", method_name, "lora|dora|lora_xs|edora (with --arch)");
  budget_cmd->add_option("--rank", rank_u, "adapter rank (with --arch)");
  budget_cmd->add_option("--format", format, "text|csv");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::string gc_method, gc_mode = "full";
  Index gc_m = 0, gc_n = 0, gc_rank = 0;
  int gc_seeds = 20;
  grad_cmd->add_option("--method", gc_method, "lora|dora|lora_xs|edora")->required();
  grad_cmd->add_option("--m", gc_m, "weight rows")->required();
  grad_cmd->add_option("--n", gc_n, "weight cols")->required();
  grad_cmd->add_option("--rank", gc_rank, "adapter rank")->required();
  grad_cmd->add_option("--seeds", gc_seeds, "number of random trials");
  grad_cmd->add_option("--mode", gc_mode, "full|detached");

  // train
  auto* train_cmd = app.add_subcommand("train", "train adapters on a synthetic task");
  std::string tr_config, tr_out, tr_report;
  bool tr_timing = false;
  train_cmd->add_option("--config", tr_config, "TrainConfig JSON")->required();
  train_cmd->add_option("--out", tr_out, "adapter checkpoint path")->required();
  train_cmd->add_option("--report", tr_report, "run report JSON path")->required();
  train_cmd->add_flag("--timing", tr_timing, "include wall time in the report");

  // merge
  auto* merge_cmd = app.add_subcommand("merge", "fold adapters into dense weights");
  std::string mg_base, mg_adapter, mg_out;
  merge_cmd->add_option("--base", mg_base, "base host checkpoint")->required();
  merge_cmd->add_option("--adapter", mg_adapter, "adapter checkpoint")->required();
  merge_cmd->add_option("--out", mg_out, "merged checkpoint path")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "svd-vs-random initialization study");
  std::string ab_config, ab_format = "text";
  int ab_seeds = 10;
  ablate_cmd->add_option("--config", ab_config, "TrainConfig JSON (method edora)")->required();
  ablate_cmd->add_option("--seeds", ab_seeds, "number of paired seeds");
  ablate_cmd->add_option("--format", ab_format, "text|csv");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "checkpoint / task inspector");
  std::string in_ckpt, in_task, in_split = "train", in_out;
  inspect_cmd->add_option("--ckpt", in_ckpt, "checkpoint to list");
  inspect_cmd->add_option("--task", in_task, "TrainConfig JSON whose task to export");
  inspect_cmd->add_option("--split", in_split, "train|eval (with --task)");
  inspect_cmd->add_option("--out", in_out, "CSV output path (with --task)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (budget_cmd->parsed()) {
      return run_budget(preset, dim, ranks_text, arch_arg, method_name, rank_u, format);
    }
    if (grad_cmd->parsed()) {
      return run_gradcheck(gc_method, gc_m, gc_n, gc_rank, gc_seeds, gc_mode);
    }
    if (train_cmd->parsed()) {
      return run_train(tr_config, tr_out, tr_report, tr_timing);
    }
    if (merge_cmd->parsed()) {
      return run_merge(mg_base, mg_adapter, mg_out);
    }
    if (ablate_cmd->parsed()) {
      return run_ablate(ab_config, ab_seeds, ab_format);
    }
    if (inspect_cmd->parsed()) {
      return run_inspect(in_ckpt, in_task, in_split, in_out);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
