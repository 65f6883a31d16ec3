#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "edora/train.hpp"

namespace edora::persist {

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

// Ordered so files are reproducible byte-for-byte from the same input.
using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

// Checkpoint container, little-endian throughout:
//   magic "EDAK" | version u32 (= 1) | entry_count u32 |
//   per entry: name_len u32, name bytes, dtype u8, rank u32, dims u32 each,
//              payload row-major (4 or 8 bytes per value).
// Written atomically (temp file + rename). f64 round-trips bit-exactly;
// f32 narrows with ties-to-even.
void save(const std::string& path, const NamedMatrices& entries, Dtype dtype);
NamedMatrices load(const std::string& path);

// Exact file size implied by the entry metadata.
std::uint64_t file_size_bytes(const NamedMatrices& entries, Dtype dtype);

struct EntryInfo {
  std::string name;
  Dtype dtype = Dtype::F64;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
};

// Entry metadata without decoding payloads.
std::vector<EntryInfo> list_entries(const std::string& path);

// Experiment config as a JSON document with exactly these keys:
// method, rank, sigma, init, adapter_lr, classifier_lr, epochs, batch_size,
// seed, norm_mode, task{kind, vocab, seq_len, n_train, n_eval, seed, shift}.
// Unknown keys are rejected; errors name the offending key.
train::TrainConfig config_from_json(const std::string& json_text);
std::string config_to_json(const train::TrainConfig& config);
train::TrainConfig read_config(const std::string& path);
void write_config(const std::string& path, const train::TrainConfig& config);

// Machine-readable run report; wall time is off by default so identical
// configs serialize to identical bytes.
std::string report_to_json(const train::RunReport& report, const train::TrainConfig& config,
                           bool include_timing = false);

std::string ablation_to_csv(const train::AblationResult& result);

}  // namespace edora::persist
