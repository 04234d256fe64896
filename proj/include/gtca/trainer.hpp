#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtca/attention.hpp"
#include "gtca/gcn.hpp"
#include "gtca/graph.hpp"
#include "gtca/sampling.hpp"

namespace gtca {

// full: GCN + attention with topology positives. no_topology drops T from the
// positive intersection; the dual variants use the same encoder kind twice.
enum class Variant { kFull, kNoTopology, kDualGcn, kDualTransformer };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);  // throws ConfigError("variant")

struct TrainConfig {
  std::size_t k = 20;
  std::size_t embedding_dim = 64;
  std::size_t hidden_dim = 0;     // GCN hidden width; 0 means embedding_dim
  std::size_t attention_dim = 0;  // attention model width; 0 means embedding_dim
  std::size_t attention_layers = 2;
  std::size_t num_random_features = 64;
  double lambda = 0.7;
  double learning_rate = 0.005;
  std::size_t epochs = 400;
  std::size_t patience = 50;  // epochs without improvement before stopping; 0 disables
  double min_delta = 1e-4;
  double tau_cl = 0.5;
  double tau_attn = 0.25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  double input_dropout = 0.0;
  std::uint64_t seed = 0;
  Variant variant = Variant::kFull;

  std::size_t gcn_hidden() const noexcept { return hidden_dim ? hidden_dim : embedding_dim; }
  std::size_t attention_width() const noexcept { return attention_dim ? attention_dim : embedding_dim; }

  // Range checks; k is checked against the node count when given.
  void validate(std::size_t num_nodes = 0) const;

  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Strict: unknown keys and wrong types raise ConfigError naming the key.
// Missing keys take defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix = "train");

using ViewEncoder = std::variant<GcnEncoder, AttentionEncoder>;

struct ViewOutputs {
  Var theta;
  Var phi;
  std::vector<Var> bound;  // parameter leaves in parameters() order
};

/// The two view encoders f_theta and f_phi selected by the variant.
class GtcaModel {
 public:
  GtcaModel(const TrainConfig& cfg, std::size_t in_dim);

  ViewOutputs forward(Tape& tape, const Tensor& x, const SparseMatrix& ahat, Mode mode, Rng& rng,
                      AttentionDiagnostics* diag = nullptr) const;
  // Eval-mode embeddings (theta, phi).
  std::pair<Tensor, Tensor> embed(const Tensor& x, const SparseMatrix& ahat) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  std::size_t in_dim() const noexcept { return in_dim_; }
  const ViewEncoder& theta() const noexcept { return theta_; }
  const ViewEncoder& phi() const noexcept { return phi_; }

 private:
  std::size_t in_dim_;
  ViewEncoder theta_;
  ViewEncoder phi_;
};

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps, double weight_decay);
  explicit Adam(const TrainConfig& cfg)
      : Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay) {}

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct PositiveStats {
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;

  bool operator==(const PositiveStats&) const = default;
};
PositiveStats positive_stats(const NeighborSets& sets);

struct TrainReport {
  std::vector<double> losses;  // one per epoch run
  std::vector<PositiveStats> positives;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  std::size_t denominator_clamps = 0;
  double seconds = 0.0;  // wall clock; not part of the determinism contract

  nlohmann::json to_json() const;
};

struct TrainResult {
  GtcaModel model;
  Tensor h_theta;  // eval-mode embeddings after training
  Tensor h_phi;
  NeighborSets sets;  // positives rebuilt from h_theta / h_phi
  TrainReport report;
};

// Raised when the loss stops being finite; carries where it first went wrong.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t node, std::string view);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t node() const noexcept { return node_; }
  const std::string& view() const noexcept { return view_; }

 private:
  std::size_t epoch_, node_;
  std::string view_;
};

// Topology view, shared by every epoch since the graph does not change.
IndexSets topology_view(const Graph& g, std::size_t k);

// Positive/negative sets from a pair of embeddings under the config's variant.
NeighborSets sample_sets(const Tensor& h_theta, const Tensor& h_phi, const IndexSets& topology,
                         const TrainConfig& cfg);

TrainResult train(const Graph& g, const TrainConfig& cfg);

// Row-normalized convex combination lambda * theta + (1 - lambda) * phi.
Tensor combine_embeddings(const Tensor& h_theta, const Tensor& h_phi, double lambda);

/// Versioned checkpoint: a magic line, one JSON header line naming every
/// tensor and its offset, then the weights as little-endian doubles.
struct Checkpoint {
  TrainConfig config;
  std::size_t in_dim = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  GtcaModel build_model() const;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const GtcaModel& model, const TrainConfig& cfg);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Throws ValidationError naming the first architecture field that differs.
void check_compatible(const Checkpoint& ckpt, const TrainConfig& cfg, std::size_t in_dim);

}  // namespace gtca
