#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtca/graph.hpp"
#include "gtca/sampling.hpp"
#include "gtca/tensor.hpp"
#include "gtca/trainer.hpp"

namespace gtca {

struct ProbeConfig {
  std::vector<double> l2_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
  double tolerance = 1e-6;  // on the max-abs gradient entry
  std::size_t max_iterations = 1000;
};

/// Multinomial logistic regression on column-standardized inputs. The
/// standardization statistics come from the training rows only.
struct LogisticModel {
  Tensor weights;  // (F + 1) x C, last row is the bias
  std::vector<double> mean;
  std::vector<double> scale;
  std::size_t iterations = 0;

  std::vector<int> predict(const Tensor& x) const;
};

// Minimizes mean cross-entropy + l2/2 |W|^2 (bias unpenalized) by gradient
// descent with backtracking line search.
LogisticModel fit_logistic(const Tensor& x, const std::vector<int>& y, std::size_t num_classes, double l2,
                           const ProbeConfig& cfg = {});

struct ProbeResult {
  double test_accuracy = 0.0;  // in [0, 1]
  double val_accuracy = 0.0;
  double l2 = 0.0;
  LogisticModel model;
};

// Fits on the train rows for every grid strength, keeps the best on val, and
// reports it on test. Throws ValidationError if a class has no train node.
ProbeResult linear_probe(const Tensor& h, const std::vector<int>& labels, const SplitSet& split,
                         const ProbeConfig& cfg = {});

struct EvalResult {
  std::vector<double> accuracies;  // per split, in [0, 1]
  std::vector<double> chosen_l2;
  double mean = 0.0;  // percent
  double std = 0.0;   // population standard deviation, percent
  std::string fingerprint;

  nlohmann::json to_json() const;
};

// Mean and population std in percent; independent of the order of `acc`.
std::pair<double, double> mean_std_percent(std::vector<double> acc);

EvalResult evaluate_over_splits(const Tensor& h, const std::vector<int>& labels, const std::vector<SplitSet>& splits,
                                const ProbeConfig& cfg = {}, std::string fingerprint = {});

// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_fingerprint(const nlohmann::json& j);

struct RunOutcome {
  TrainResult trained;
  Tensor embedding;  // fused with the config's lambda
  EvalResult eval;
};

// Train with `cfg`, fuse, probe on every split.
RunOutcome run_pipeline(const Graph& g, const TrainConfig& cfg, const std::vector<SplitSet>& splits,
                        const ProbeConfig& probe = {});

EvalResult ablation_run(const Graph& g, TrainConfig cfg, Variant variant, const std::vector<SplitSet>& splits,
                        const ProbeConfig& probe = {});

enum class SweepParam { kK, kEmbeddingDim, kLambda };
SweepParam parse_sweep_param(const std::string& name);  // "k", "E" or "lambda"
std::string to_string(SweepParam p);

struct CorrectRatios {
  std::optional<double> positives, b_theta, b_phi, topology;
};
CorrectRatios correct_ratios(const NeighborSets& sets, const std::vector<int>& labels);

struct SweepRow {
  double value = 0.0;
  double mean = 0.0;
  double std = 0.0;
  CorrectRatios ratios;
};

struct SweepTable {
  SweepParam param = SweepParam::kK;
  std::vector<SweepRow> rows;

  std::string to_csv() const;
};

// One row per grid value. Lambda only affects fusion, so a lambda sweep trains
// once; k and E retrain per point.
SweepTable sensitivity_sweep(const Graph& g, const TrainConfig& base, SweepParam param,
                             const std::vector<double>& grid, const std::vector<SplitSet>& splits,
                             const ProbeConfig& probe = {});

struct PcaResult {
  Tensor coords;       // N x dims
  Tensor components;   // dims x F, unit rows
  std::vector<double> variances;  // per component, descending
};

// Projects centered rows onto the top principal directions. Each
// component's largest-magnitude loading is made positive.
PcaResult pca(const Tensor& h, std::size_t dims = 2);
inline Tensor pca_project(const Tensor& h, std::size_t dims = 2) { return pca(h, dims).coords; }

std::string pca_csv(const Tensor& coords, const std::vector<int>& labels);

// Correct ratios plus, when `dump_sets` is set, every P_i.
nlohmann::json analysis_report(const NeighborSets& sets, const std::vector<int>& labels, bool dump_sets);

}  // namespace gtca
