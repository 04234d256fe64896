#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtca/eval.hpp"
#include "gtca/graph.hpp"
#include "gtca/trainer.hpp"

namespace gtca {

// Exactly one of `header` or `sbm` is set.
struct DatasetSpec {
  std::filesystem::path header;
  std::optional<SbmParams> sbm;
};

struct SplitSpec {
  std::size_t train_per_class = 20;
  ValSpec val = ValSpec::per_class(30);
  std::size_t count = 20;
  std::uint64_t seed = 0;
};

struct SweepSpec {
  SweepParam param = SweepParam::kLambda;
  std::vector<double> grid;
};

/// Everything a command needs. Relative paths in the file resolve against
/// the config file's directory.
struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  SplitSpec splits;
  ProbeConfig probe;
  std::filesystem::path output_dir = "gtca_out";
  std::optional<SweepSpec> sweep;
  std::vector<Variant> ablate{Variant::kFull, Variant::kNoTopology, Variant::kDualGcn, Variant::kDualTransformer};
  bool dump_sets = false;
  std::size_t pca_dims = 2;
};

// Strict parse: unknown keys, wrong types and bad ranges raise ConfigError
// with the dotted field name.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& cfg);

Graph load_dataset(const DatasetSpec& spec);
std::vector<SplitSet> make_run_splits(const Graph& g, const SplitSpec& spec);

}  // namespace gtca
