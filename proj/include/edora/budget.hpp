#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edora/adapters.hpp"

namespace edora::budget {

// A named family of weight matrices to adapt; count is how many instances
// exist in the model (typically per-layer occurrences times layer count).
struct Target {
  std::string label;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint64_t count = 0;
};

struct ArchSpec {
  std::string name;
  std::vector<Target> targets;
};

// Trainable-parameter ratios for a square n x n weight at rank r.
double ratio_lora_edora(std::uint64_t n, std::uint64_t r);   // 2nr / (n + r^2)
double ratio_dora_edora(std::uint64_t n, std::uint64_t r);   // (n + 2nr) / (n + r^2)

struct RatioRow {
  std::string model;
  std::uint64_t n = 0;
  std::map<std::uint64_t, double> lora_over_edora;
  std::map<std::uint64_t, double> dora_over_edora;
};

// Ratio table across the reference model sizes at ranks 16 and 32.
std::vector<RatioRow> table1();

// Sum over targets of count * trainable_count(method, rows, cols, r).
// Throws if r exceeds a target's smaller dimension, naming the target.
std::uint64_t count_total(const ArchSpec& arch, adapters::AdapterMethod method,
                          std::uint64_t r);

// count * bytes_per_param * replicas with overflow checking.
std::uint64_t storage_bytes(std::uint64_t count, std::uint64_t bytes_per_param,
                            std::uint64_t replicas);

// 12 encoder layers; query, value, attention-output (768x768) and the first
// fully-connected weight (3072x768) per layer.
ArchSpec roberta_base_preset();

// 96 decoder layers, query and value only, d = 12288.
ArchSpec gpt3_qv_preset();

ArchSpec arch_from_json(const std::string& json_text);
ArchSpec arch_from_json_file(const std::string& path);
std::string arch_to_json(const ArchSpec& arch);

// Half-up rounding to two decimals, the table display convention.
double round2(double v);

}  // namespace edora::budget
