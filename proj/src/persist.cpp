#include "edora/persist.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace edora::persist {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'A', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::string bytes(std::size_t n, const std::string& what) {
    need(n, what);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void need(std::size_t n, const std::string& what) {
    if (pos_ + n > data_.size()) {
      throw std::runtime_error("checkpoint " + path_ + ": truncated while reading " + what);
    }
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t file_size_bytes(const NamedMatrices& entries, Dtype dtype) {
  const std::uint64_t elem = dtype == Dtype::F32 ? 4 : 8;
  std::uint64_t total = 4 + 4 + 4;
  for (const auto& [name, m] : entries) {
    total += 4 + name.size() + 1 + 4 + 2 * 4;
    total += elem * static_cast<std::uint64_t>(m.size());
  }
  return total;
}

void save(const std::string& path, const NamedMatrices& entries, Dtype dtype) {
  std::set<std::string> seen;
  for (const auto& [name, m] : entries) {
    if (!seen.insert(name).second) {
      throw std::invalid_argument("checkpoint save: duplicate entry name '" + name + "'");
    }
    (void)m;
  }

  std::string buf;
  buf.reserve(file_size_bytes(entries, dtype));
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, m] : entries) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    buf.push_back(static_cast<char>(dtype));
    put_u32(buf, 2);
    put_u32(buf, static_cast<std::uint32_t>(m.rows()));
    put_u32(buf, static_cast<std::uint32_t>(m.cols()));
    if (dtype == Dtype::F64) {
      buf.append(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::size_t>(m.size()) * sizeof(double));
    } else {
      for (Index i = 0; i < m.size(); ++i) {
        const float f = static_cast<float>(m.data()[i]);  // ties-to-even narrowing
        char raw[4];
        std::memcpy(raw, &f, 4);
        buf.append(raw, 4);
      }
    }
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("checkpoint save: cannot open " + tmp);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
      throw std::runtime_error("checkpoint save: write failed for " + tmp);
    }
  }
  std::filesystem::rename(tmp, path);
}

NamedMatrices load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint load: cannot open " + path);
  }
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  const std::string magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t count = r.u32("entry count");

  NamedMatrices entries;
  entries.reserve(count);
  std::set<std::string> seen;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = r.u32("entry name length");
    const std::string name = r.bytes(name_len, "entry name");
    if (!seen.insert(name).second) {
      throw std::runtime_error("checkpoint " + path + ": duplicate entry name '" + name + "'");
    }
    const std::uint8_t dtype = r.u8("dtype of '" + name + "'");
    if (dtype > 1) {
      throw std::runtime_error("checkpoint " + path + ": unknown dtype for '" + name + "'");
    }
    const std::uint32_t rank = r.u32("rank of '" + name + "'");
    if (rank < 1 || rank > 2) {
      throw std::runtime_error("checkpoint " + path + ": unsupported rank " +
                               std::to_string(rank) + " for '" + name + "'");
    }
    std::uint64_t rows = r.u32("dims of '" + name + "'");
    std::uint64_t cols = rank == 2 ? r.u32("dims of '" + name + "'") : 1;
    const std::uint64_t elems = rows * cols;
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    if (dtype == static_cast<std::uint8_t>(Dtype::F64)) {
      const std::string payload = r.bytes(static_cast<std::size_t>(elems) * 8,
                                          "payload of '" + name + "'");
      std::memcpy(m.data(), payload.data(), payload.size());
    } else {
      const std::string payload = r.bytes(static_cast<std::size_t>(elems) * 4,
                                          "payload of '" + name + "'");
      for (std::uint64_t i = 0; i < elems; ++i) {
        float f;
        std::memcpy(&f, payload.data() + i * 4, 4);
        m.data()[i] = static_cast<double>(f);
      }
    }
    entries.emplace_back(name, std::move(m));
  }
  return entries;
}

std::vector<EntryInfo> list_entries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("checkpoint load: cannot open " + path);
  }
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  const std::string magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  }
  if (const std::uint32_t version = r.u32("version"); version != kVersion) {
    throw std::runtime_error("checkpoint " + path + ": unsupported version " +
                             std::to_string(version));
  }
  const std::uint32_t count = r.u32("entry count");
  std::vector<EntryInfo> infos;
  infos.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    EntryInfo info;
    const std::uint32_t name_len = r.u32("entry name length");
    info.name = r.bytes(name_len, "entry name");
    const std::uint8_t dtype = r.u8("dtype of '" + info.name + "'");
    if (dtype > 1) {
      throw std::runtime_error("checkpoint " + path + ": unknown dtype for '" + info.name + "'");
    }
    info.dtype = static_cast<Dtype>(dtype);
    const std::uint32_t rank = r.u32("rank of '" + info.name + "'");
    if (rank < 1 || rank > 2) {
      throw std::runtime_error("checkpoint " + path + ": unsupported rank for '" + info.name +
                               "'");
    }
    info.rows = r.u32("dims of '" + info.name + "'");
    info.cols = rank == 2 ? r.u32("dims of '" + info.name + "'") : 1;
    const std::uint64_t bytes = info.rows * info.cols * (info.dtype == Dtype::F32 ? 4 : 8);
    r.bytes(static_cast<std::size_t>(bytes), "payload of '" + info.name + "'");
    infos.push_back(std::move(info));
  }
  return infos;
}

namespace {

using nlohmann::json;

[[noreturn]] void missing_key(const std::string& scope, const std::string& key) {
  throw std::invalid_argument("config: missing key '" + scope + key + "'");
}

[[noreturn]] void invalid_key(const std::string& scope, const std::string& key,
                              const std::string& why) {
  throw std::invalid_argument("config: invalid value for key '" + scope + key + "': " + why);
}

const json& require(const json& obj, const std::string& scope, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    missing_key(scope, key);
  }
  return *it;
}

template <typename T>
T get_value(const json& obj, const std::string& scope, const std::string& key) {
  try {
    return require(obj, scope, key).get<T>();
  } catch (const json::exception& e) {
    invalid_key(scope, key, e.what());
  }
}

void reject_unknown(const json& obj, const std::string& scope,
                    const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (allowed.find(it.key()) == allowed.end()) {
      throw std::invalid_argument("config: unknown key '" + scope + it.key() + "'");
    }
  }
}

}  // namespace

train::TrainConfig config_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw std::invalid_argument("config: top-level document must be an object");
  }
  reject_unknown(doc, "",
                 {"method", "rank", "sigma", "init", "adapter_lr", "classifier_lr", "epochs",
                  "batch_size", "seed", "norm_mode", "task"});

  train::TrainConfig cfg;
  try {
    cfg.method = adapters::method_from_name(get_value<std::string>(doc, "", "method"));
  } catch (const std::invalid_argument& e) {
    if (std::string(e.what()).find("unknown adapter method") == 0) invalid_key("", "method", e.what());
    throw;
  }
  cfg.rank = get_value<Index>(doc, "", "rank");
  if (cfg.rank < 1) invalid_key("", "rank", "must be >= 1");
  cfg.sigma = get_value<double>(doc, "", "sigma");
  if (!(cfg.sigma >= 0.0)) invalid_key("", "sigma", "must be >= 0");
  const std::string init = get_value<std::string>(doc, "", "init");
  if (init == "svd") cfg.init_kind = adapters::InitKind::Svd;
  else if (init == "random") cfg.init_kind = adapters::InitKind::Random;
  else invalid_key("", "init", "expected \"svd\" or \"random\"");
  cfg.adapter_lr = get_value<double>(doc, "", "adapter_lr");
  if (!(cfg.adapter_lr > 0.0)) invalid_key("", "adapter_lr", "must be > 0");
  cfg.classifier_lr = get_value<double>(doc, "", "classifier_lr");
  if (!(cfg.classifier_lr > 0.0)) invalid_key("", "classifier_lr", "must be > 0");
  cfg.epochs = get_value<int>(doc, "", "epochs");
  if (cfg.epochs < 0) invalid_key("", "epochs", "must be >= 0");
  cfg.batch_size = get_value<int>(doc, "", "batch_size");
  if (cfg.batch_size < 1) invalid_key("", "batch_size", "must be >= 1");
  cfg.seed = get_value<std::uint64_t>(doc, "", "seed");
  const std::string mode = get_value<std::string>(doc, "", "norm_mode");
  if (mode == "full") cfg.norm_mode = autograd::NormMode::Full;
  else if (mode == "detached") cfg.norm_mode = autograd::NormMode::Detached;
  else invalid_key("", "norm_mode", "expected \"full\" or \"detached\"");

  const json& task = require(doc, "", "task");
  if (!task.is_object()) invalid_key("", "task", "must be an object");
  reject_unknown(task, "task.", {"kind", "vocab", "seq_len", "n_train", "n_eval", "seed", "shift"});
  try {
    cfg.task.kind = model::task_kind_from_name(get_value<std::string>(task, "task.", "kind"));
  } catch (const std::invalid_argument& e) {
    if (std::string(e.what()).find("unknown task kind") == 0) invalid_key("task.", "kind", e.what());
    throw;
  }
  cfg.task.vocab = get_value<Index>(task, "task.", "vocab");
  if (cfg.task.vocab < 2) invalid_key("task.", "vocab", "must be >= 2");
  cfg.task.seq_len = get_value<Index>(task, "task.", "seq_len");
  if (cfg.task.seq_len < 1) invalid_key("task.", "seq_len", "must be >= 1");
  cfg.task.n_train = get_value<Index>(task, "task.", "n_train");
  if (cfg.task.n_train < 1) invalid_key("task.", "n_train", "must be >= 1");
  cfg.task.n_eval = get_value<Index>(task, "task.", "n_eval");
  if (cfg.task.n_eval < 1) invalid_key("task.", "n_eval", "must be >= 1");
  cfg.task.seed = get_value<std::uint64_t>(task, "task.", "seed");
  cfg.task.shift = get_value<double>(task, "task.", "shift");
  if (!(cfg.task.shift >= 0.0 && cfg.task.shift <= 1.0)) {
    invalid_key("task.", "shift", "must lie in [0, 1]");
  }
  return cfg;
}

std::string config_to_json(const train::TrainConfig& config) {
  json doc;
  doc["method"] = adapters::method_name(config.method);
  doc["rank"] = config.rank;
  doc["sigma"] = config.sigma;
  doc["init"] = config.init_kind == adapters::InitKind::Svd ? "svd" : "random";
  doc["adapter_lr"] = config.adapter_lr;
  doc["classifier_lr"] = config.classifier_lr;
  doc["epochs"] = config.epochs;
  doc["batch_size"] = config.batch_size;
  doc["seed"] = config.seed;
  doc["norm_mode"] = config.norm_mode == autograd::NormMode::Full ? "full" : "detached";
  doc["task"] = {
      {"kind", model::task_kind_name(config.task.kind)},
      {"vocab", config.task.vocab},
      {"seq_len", config.task.seq_len},
      {"n_train", config.task.n_train},
      {"n_eval", config.task.n_eval},
      {"seed", config.task.seed},
      {"shift", config.task.shift},
  };
  return doc.dump(2) + "\n";
}

train::TrainConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open " + path);
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void write_config(const std::string& path, const train::TrainConfig& config) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) {
      throw std::runtime_error("config: cannot open " + tmp);
    }
    out << config_to_json(config);
  }
  std::filesystem::rename(tmp, path);
}

std::string report_to_json(const train::RunReport& report, const train::TrainConfig& config,
                           bool include_timing) {
  json doc;
  doc["config"] = json::parse(config_to_json(config));
  doc["epoch_loss"] = report.epoch_loss;
  doc["metrics"] = report.metrics;
  doc["trainable_param_count"] = report.trainable_param_count;
  if (include_timing) {
    doc["wall_time_seconds"] = report.wall_time_seconds;
  }
  return doc.dump(2) + "\n";
}

std::string ablation_to_csv(const train::AblationResult& result) {
  std::string out = "seed,svd_" + result.metric + ",random_" + result.metric + ",win\n";
  char buf[64];
  for (const auto& pair : result.pairs) {
    const double s = pair.svd.metrics.at(result.metric);
    const double r = pair.random.metrics.at(result.metric);
    std::snprintf(buf, sizeof(buf), "%llu,", static_cast<unsigned long long>(pair.seed));
    out += buf;
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", s, r, s >= r ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace edora::persist
