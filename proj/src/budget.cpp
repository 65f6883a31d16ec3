#include "edora/budget.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace edora::budget {

double ratio_lora_edora(std::uint64_t n, std::uint64_t r) {
  if (n < 1 || r < 1) {
    throw std::invalid_argument("ratio_lora_edora: n and r must be >= 1");
  }
  return static_cast<double>(2 * n * r) / static_cast<double>(n + r * r);
}

double ratio_dora_edora(std::uint64_t n, std::uint64_t r) {
  if (n < 1 || r < 1) {
    throw std::invalid_argument("ratio_dora_edora: n and r must be >= 1");
  }
  return static_cast<double>(n + 2 * n * r) / static_cast<double>(n + r * r);
}

std::vector<RatioRow> table1() {
  static const std::pair<const char*, std::uint64_t> kModels[] = {
      {"BERT_base", 768},      {"RoBERTa_large", 1024}, {"ALBERT_xlarge", 2048},
      {"OPT_6.7B", 4096},      {"GPT-3", 12288},        {"PaLM_540B", 18432},
  };
  std::vector<RatioRow> rows;
  for (const auto& [name, n] : kModels) {
    RatioRow row;
    row.model = name;
    row.n = n;
    for (std::uint64_t r : {std::uint64_t{16}, std::uint64_t{32}}) {
      row.lora_over_edora[r] = ratio_lora_edora(n, r);
      row.dora_over_edora[r] = ratio_dora_edora(n, r);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::uint64_t count_total(const ArchSpec& arch, adapters::AdapterMethod method,
                          std::uint64_t r) {
  std::uint64_t total = 0;
  for (const Target& t : arch.targets) {
    if (r > std::min(t.rows, t.cols)) {
      throw std::invalid_argument("count_total: rank " + std::to_string(r) +
                                  " exceeds min dimension of target '" + t.label + "' (" +
                                  std::to_string(t.rows) + "x" + std::to_string(t.cols) + ")");
    }
    total += t.count * adapters::trainable_count(method, t.rows, t.cols, r);
  }
  return total;
}

std::uint64_t storage_bytes(std::uint64_t count, std::uint64_t bytes_per_param,
                            std::uint64_t replicas) {
  if (count == 0 || bytes_per_param == 0 || replicas == 0) {
    throw std::invalid_argument("storage_bytes: all arguments must be positive");
  }
  std::uint64_t per_ckpt = 0, total = 0;
  if (__builtin_mul_overflow(count, bytes_per_param, &per_ckpt) ||
      __builtin_mul_overflow(per_ckpt, replicas, &total)) {
    throw std::overflow_error("storage_bytes: product overflows 64 bits");
  }
  return total;
}

ArchSpec roberta_base_preset() {
  ArchSpec arch;
  arch.name = "roberta_base";
  arch.targets = {
      {"query", 768, 768, 12},
      {"value", 768, 768, 12},
      {"attn_output", 768, 768, 12},
      {"fc1", 3072, 768, 12},
  };
  return arch;
}

ArchSpec gpt3_qv_preset() {
  ArchSpec arch;
  arch.name = "gpt3_qv";
  arch.targets = {
      {"query", 12288, 12288, 96},
      {"value", 12288, 12288, 96},
  };
  return arch;
}

ArchSpec arch_from_json(const std::string& json_text) {
  nlohmann::json doc = nlohmann::json::parse(json_text);
  ArchSpec arch;
  if (!doc.is_object() || !doc.contains("name") || !doc.contains("targets")) {
    throw std::invalid_argument("arch spec: expected an object with 'name' and 'targets'");
  }
  arch.name = doc.at("name").get<std::string>();
  for (const auto& t : doc.at("targets")) {
    Target target;
    target.label = t.at("label").get<std::string>();
    target.rows = t.at("rows").get<std::uint64_t>();
    target.cols = t.at("cols").get<std::uint64_t>();
    target.count = t.at("count").get<std::uint64_t>();
    if (target.rows == 0 || target.cols == 0 || target.count == 0) {
      throw std::invalid_argument("arch spec: target '" + target.label +
                                  "' has a zero dimension or count");
    }
    arch.targets.push_back(std::move(target));
  }
  for (std::size_t i = 0; i < arch.targets.size(); ++i) {
    for (std::size_t j = i + 1; j < arch.targets.size(); ++j) {
      if (arch.targets[i].label == arch.targets[j].label) {
        throw std::invalid_argument("arch spec: duplicate target label '" +
                                    arch.targets[i].label + "'");
      }
    }
  }
  return arch;
}

ArchSpec arch_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("arch spec: cannot open " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return arch_from_json(ss.str());
}

std::string arch_to_json(const ArchSpec& arch) {
  nlohmann::json doc;
  doc["name"] = arch.name;
  doc["targets"] = nlohmann::json::array();
  for (const Target& t : arch.targets) {
    doc["targets"].push_back(
        {{"label", t.label}, {"rows", t.rows}, {"cols", t.cols}, {"count", t.count}});
  }
  return doc.dump(2);
}

double round2(double v) {
  return std::floor(v * 100.0 + 0.5) / 100.0;
}

}  // namespace edora::budget
