#include "gtca/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "gtca/errors.hpp"
#include "gtca/json_fields.hpp"
#include "gtca/loss.hpp"

namespace gtca {

namespace {

constexpr std::uint64_t kTrainStream = 0x7472;
constexpr const char* kCheckpointMagic = "GTCA-CHECKPOINT";

struct VariantName {
  Variant v;
  const char* name;
};
constexpr VariantName kVariantNames[] = {{Variant::kFull, "full"},
                                         {Variant::kNoTopology, "no_topology"},
                                         {Variant::kDualGcn, "dual_gcn"},
                                         {Variant::kDualTransformer, "dual_transformer"}};

ViewEncoder make_view(bool gcn, const TrainConfig& cfg, std::size_t in_dim, std::uint64_t seed) {
  if (gcn) return GcnEncoder(in_dim, cfg.gcn_hidden(), cfg.embedding_dim, seed, cfg.input_dropout);
  AttentionConfig a;
  a.in_dim = in_dim;
  a.model_dim = cfg.attention_width();
  a.out_dim = cfg.embedding_dim;
  a.layers = cfg.attention_layers;
  a.num_random_features = cfg.num_random_features;
  a.tau = cfg.tau_attn;
  a.seed = seed;
  return AttentionEncoder(a);
}

std::vector<Tensor*> view_parameters(ViewEncoder& e) {
  return std::visit([](auto& enc) { return enc.parameters(); }, e);
}

std::vector<std::string> view_parameter_names(const ViewEncoder& e) {
  if (const auto* a = std::get_if<AttentionEncoder>(&e)) return a->parameter_names();
  return {"w0", "w1"};
}

Var view_forward(const ViewEncoder& e, Var x, const SparseMatrix& ahat, std::span<const Var> bound, Mode mode,
                 Rng& gumbel, Rng& dropout, AttentionDiagnostics* diag) {
  if (const auto* g = std::get_if<GcnEncoder>(&e)) return g->forward(x, ahat, bound, mode, dropout);
  return std::get<AttentionEncoder>(e).forward(x, bound, mode, gumbel, diag);
}

void check_range(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw ConfigError(std::string("train.") + field, msg);
}

}  // namespace

std::string to_string(Variant v) {
  for (const auto& n : kVariantNames)
    if (n.v == v) return n.name;
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (const auto& n : kVariantNames)
    if (name == n.name) return n.v;
  throw ConfigError("variant", "unknown variant '" + name + "' (full, no_topology, dual_gcn, dual_transformer)");
}

void TrainConfig::validate(std::size_t num_nodes) const {
  check_range(k >= 1, "k", "must be at least 1");
  if (num_nodes)
    check_range(k < num_nodes, "k", "must be below the node count " + std::to_string(num_nodes));
  check_range(embedding_dim >= 1, "embedding_dim", "must be at least 1");
  check_range(attention_layers >= 1, "attention_layers", "must be at least 1");
  check_range(num_random_features >= 1, "num_random_features", "must be at least 1");
  check_range(lambda >= 0.0 && lambda <= 1.0, "lambda", "must lie in [0, 1]");
  check_range(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate", "must be positive");
  check_range(epochs >= 1, "epochs", "must be at least 1");
  check_range(min_delta >= 0.0, "min_delta", "must be non-negative");
  check_range(tau_cl > 0.0, "tau_cl", "must be positive");
  check_range(tau_attn > 0.0, "tau_attn", "must be positive");
  check_range(beta1 >= 0.0 && beta1 < 1.0, "beta1", "must lie in [0, 1)");
  check_range(beta2 >= 0.0 && beta2 < 1.0, "beta2", "must lie in [0, 1)");
  check_range(adam_eps > 0.0, "adam_eps", "must be positive");
  check_range(weight_decay >= 0.0, "weight_decay", "must be non-negative");
  check_range(input_dropout >= 0.0 && input_dropout < 1.0, "input_dropout", "must lie in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"k", c.k},
          {"embedding_dim", c.embedding_dim},
          {"hidden_dim", c.hidden_dim},
          {"attention_dim", c.attention_dim},
          {"attention_layers", c.attention_layers},
          {"num_random_features", c.num_random_features},
          {"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"patience", c.patience},
          {"min_delta", c.min_delta},
          {"tau_cl", c.tau_cl},
          {"tau_attn", c.tau_attn},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay},
          {"input_dropout", c.input_dropout},
          {"seed", c.seed},
          {"variant", to_string(c.variant)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  FieldReader r(j, prefix);
  TrainConfig c;
  r.read("k", c.k);
  r.read("embedding_dim", c.embedding_dim);
  r.read("hidden_dim", c.hidden_dim);
  r.read("attention_dim", c.attention_dim);
  r.read("attention_layers", c.attention_layers);
  r.read("num_random_features", c.num_random_features);
  r.read("lambda", c.lambda);
  r.read("learning_rate", c.learning_rate);
  r.read("epochs", c.epochs);
  r.read("patience", c.patience);
  r.read("min_delta", c.min_delta);
  r.read("tau_cl", c.tau_cl);
  r.read("tau_attn", c.tau_attn);
  r.read("beta1", c.beta1);
  r.read("beta2", c.beta2);
  r.read("adam_eps", c.adam_eps);
  r.read("weight_decay", c.weight_decay);
  r.read("input_dropout", c.input_dropout);
  r.read("seed", c.seed);
  std::string variant;
  if (r.read("variant", variant)) {
    try {
      c.variant = parse_variant(variant);
    } catch (const ConfigError& e) {
      throw ConfigError(r.field("variant"), e.what());
    }
  }
  r.finish();
  return c;
}

GtcaModel::GtcaModel(const TrainConfig& cfg, std::size_t in_dim)
    : in_dim_(in_dim),
      theta_(make_view(cfg.variant != Variant::kDualTransformer, cfg, in_dim, cfg.seed)),
      phi_(make_view(cfg.variant == Variant::kDualGcn, cfg, in_dim, cfg.seed + 1)) {
  if (in_dim == 0) throw ValidationError("model: feature dimension must be positive");
}

std::vector<Tensor*> GtcaModel::parameters() {
  auto out = view_parameters(theta_);
  for (Tensor* t : view_parameters(phi_)) out.push_back(t);
  return out;
}

std::vector<const Tensor*> GtcaModel::parameters() const {
  auto mut = const_cast<GtcaModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> GtcaModel::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& n : view_parameter_names(theta_)) out.push_back("theta." + n);
  for (const auto& n : view_parameter_names(phi_)) out.push_back("phi." + n);
  return out;
}

ViewOutputs GtcaModel::forward(Tape& tape, const Tensor& x, const SparseMatrix& ahat, Mode mode, Rng& rng,
                               AttentionDiagnostics* diag) const {
  if (x.cols() != in_dim_)
    throw ShapeError("model: features have " + std::to_string(x.cols()) + " columns, expected " +
                     std::to_string(in_dim_));
  ViewOutputs out;
  for (const Tensor* t : parameters()) out.bound.push_back(tape.parameter(*t));
  const std::size_t split = view_parameters(const_cast<ViewEncoder&>(theta_)).size();
  const std::span<const Var> all(out.bound);
  Var xv = tape.constant(x);
  // Separate streams keep the Gumbel draws independent of dropout masks.
  Rng gumbel(rng()), dropout(rng());
  out.theta = view_forward(theta_, xv, ahat, all.first(split), mode, gumbel, dropout, diag);
  out.phi = view_forward(phi_, xv, ahat, all.subspan(split), mode, gumbel, dropout, diag);
  return out;
}

std::pair<Tensor, Tensor> GtcaModel::embed(const Tensor& x, const SparseMatrix& ahat) const {
  Tape tape;
  Rng unused(0);
  ViewOutputs v = forward(tape, x, ahat, Mode::kEval, unused);
  return {v.theta.value(), v.phi.value()};
}

Adam::Adam(double lr, double beta1, double beta2, double eps, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ContractError("adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) throw ContractError("adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const Tensor& g = *grads[p];
    if (g.rows() != w.rows() || g.cols() != w.cols()) throw ShapeError("adam: gradient shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + weight_decay_ * w[i];
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * gi;
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr_ * (m_[p][i] / c1) / (std::sqrt(v_[p][i] / c2) + eps_);
    }
  }
}

PositiveStats positive_stats(const NeighborSets& sets) {
  PositiveStats s;
  if (sets.positives.empty()) return s;
  s.min = sets.positives[0].size();
  for (const auto& p : sets.positives) {
    s.min = std::min(s.min, p.size());
    s.max = std::max(s.max, p.size());
  }
  s.mean = static_cast<double>(sets.total_positives()) / static_cast<double>(sets.num_nodes());
  return s;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& p : positives) pos.push_back({{"mean", p.mean}, {"min", p.min}, {"max", p.max}});
  return {{"losses", losses},           {"positives", pos},
          {"epochs_run", epochs_run},   {"stopped_early", stopped_early},
          {"denominator_clamps", denominator_clamps}, {"seconds", seconds}};
}

NonFiniteLoss::NonFiniteLoss(std::size_t epoch, std::size_t node, std::string view)
    : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", node " + std::to_string(node) +
                         " (" + view + " anchor)"),
      epoch_(epoch),
      node_(node),
      view_(std::move(view)) {}

IndexSets topology_view(const Graph& g, std::size_t k) { return topological_knn(g.adjacency, k); }

NeighborSets sample_sets(const Tensor& h_theta, const Tensor& h_phi, const IndexSets& topology,
                         const TrainConfig& cfg) {
  if (cfg.variant == Variant::kNoTopology)
    return build_pairs_without_topology(cosine_knn(h_theta, cfg.k), cosine_knn(h_phi, cfg.k));
  return build_pairs(cosine_knn(h_theta, cfg.k), cosine_knn(h_phi, cfg.k), topology);
}

TrainResult train(const Graph& g, const TrainConfig& cfg) {
  cfg.validate(g.num_nodes);
  const auto start = std::chrono::steady_clock::now();
  const SparseMatrix ahat = normalize_adjacency(g);
  const IndexSets topology = cfg.variant == Variant::kNoTopology ? IndexSets{} : topology_view(g, cfg.k);

  GtcaModel model(cfg, g.num_features());
  Adam adam(cfg);
  Rng rng = make_rng(cfg.seed, kTrainStream);
  const LossConfig loss_cfg{cfg.tau_cl};

  TrainReport report;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    AttentionDiagnostics diag;
    ViewOutputs views = model.forward(tape, g.features, ahat, Mode::kTrain, rng, &diag);
    const NeighborSets sets = sample_sets(views.theta.value(), views.phi.value(), topology, cfg);
    const LossTerms terms = contrastive_loss(views.theta, views.phi, sets.positives, loss_cfg);
    const double loss = terms.total.value()[0];
    if (!std::isfinite(loss)) {
      for (const auto& [vals, name] : {std::pair{&terms.theta_terms.value(), "theta"},
                                       std::pair{&terms.phi_terms.value(), "phi"}})
        for (std::size_t i = 0; i < vals->size(); ++i)
          if (!std::isfinite((*vals)[i])) throw NonFiniteLoss(epoch, i, name);
      throw NonFiniteLoss(epoch, 0, "total");
    }

    const Gradients grads = tape.backward(terms.total);
    std::vector<const Tensor*> grad_refs;
    for (const Var& v : views.bound) grad_refs.push_back(&grads.of(v));
    adam.step(model.parameters(), grad_refs);

    report.losses.push_back(loss);
    report.positives.push_back(positive_stats(sets));
    report.denominator_clamps += diag.denominator_clamps;
    report.epochs_run = epoch + 1;

    if (loss < best - cfg.min_delta) {
      best = loss;
      stale = 0;
    } else if (cfg.patience && ++stale >= cfg.patience) {
      report.stopped_early = epoch + 1 < cfg.epochs;
      break;
    }
  }

  auto [h_theta, h_phi] = model.embed(g.features, ahat);
  NeighborSets final_sets = sample_sets(h_theta, h_phi, topology, cfg);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return TrainResult{std::move(model), std::move(h_theta), std::move(h_phi), std::move(final_sets),
                     std::move(report)};
}

Tensor combine_embeddings(const Tensor& h_theta, const Tensor& h_phi, double lambda) {
  if (h_theta.rows() != h_phi.rows() || h_theta.cols() != h_phi.cols())
    throw ShapeError("combine_embeddings: view shapes differ");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "must lie in [0, 1]");
  Tape tape;
  const Tensor zt = row_l2_normalize(tape.constant(h_theta)).value();
  const Tensor zp = row_l2_normalize(tape.constant(h_phi)).value();
  Tensor out(zt.rows(), zt.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = lambda * zt[i] + (1.0 - lambda) * zp[i];
  return out;
}

GtcaModel Checkpoint::build_model() const {
  GtcaModel model(config, in_dim);
  const auto names = model.parameter_names();
  auto params = model.parameters();
  if (names.size() != tensors.size()) throw ValidationError("checkpoint: tensor count does not match the model");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& [name, t] = tensors[p];
    if (name != names[p]) throw ValidationError("checkpoint: expected tensor " + names[p] + ", found " + name);
    if (t.rows() != params[p]->rows() || t.cols() != params[p]->cols())
      throw ValidationError("checkpoint: tensor " + name + " has the wrong shape");
    *params[p] = t;
  }
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const GtcaModel& model, const TrainConfig& cfg) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");
  nlohmann::json header{{"version", kCheckpointVersion}, {"in_dim", model.in_dim()}, {"config", to_json(cfg)}};
  nlohmann::json tensors = nlohmann::json::array();
  const auto names = model.parameter_names();
  const auto params = model.parameters();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    tensors.push_back({{"name", names[p]}, {"rows", params[p]->rows()}, {"cols", params[p]->cols()},
                       {"offset", offset}});
    offset += params[p]->size();
  }
  header["tensors"] = tensors;
  header["num_values"] = offset;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << " v" << kCheckpointVersion << '\n' << header.dump() << '\n';
  for (const Tensor* t : params)
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!out) throw ValidationError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  const std::string expected = std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion);
  if (magic.rfind(kCheckpointMagic, 0) != 0) throw ValidationError(path.string() + ": not a checkpoint file");
  if (magic != expected) throw ValidationError(path.string() + ": unsupported checkpoint version '" + magic + "'");
  std::getline(in, header_line);

  Checkpoint ck;
  std::size_t num_values = 0;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
    ck.in_dim = header.at("in_dim").get<std::size_t>();
    num_values = header.at("num_values").get<std::size_t>();
    ck.config = train_config_from_json(header.at("config"), "config");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": bad checkpoint header: " + e.what());
  }

  std::vector<double> blob(num_values);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(num_values * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != num_values * sizeof(double))
    throw ValidationError(path.string() + ": truncated checkpoint");
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError(path.string() + ": trailing bytes");

  try {
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("rows").get<std::size_t>(), cols = t.at("cols").get<std::size_t>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (offset + rows * cols > num_values) throw ValidationError(path.string() + ": tensor outside the blob");
      ck.tensors.emplace_back(t.at("name").get<std::string>(),
                              Tensor(rows, cols, std::vector<double>(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                                                                     blob.begin() + static_cast<std::ptrdiff_t>(
                                                                                        offset + rows * cols))));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": bad tensor table: " + e.what());
  }
  return ck;
}

void check_compatible(const Checkpoint& ckpt, const TrainConfig& cfg, std::size_t in_dim) {
  auto expect = [](bool same, const std::string& field) {
    if (!same) throw ValidationError("checkpoint does not match config: " + field + " differs");
  };
  const TrainConfig& c = ckpt.config;
  expect(ckpt.in_dim == in_dim, "feature dimension");
  expect(c.variant == cfg.variant, "variant");
  expect(c.embedding_dim == cfg.embedding_dim, "embedding_dim");
  expect(c.gcn_hidden() == cfg.gcn_hidden(), "hidden_dim");
  expect(c.attention_width() == cfg.attention_width(), "attention_dim");
  expect(c.attention_layers == cfg.attention_layers, "attention_layers");
  expect(c.num_random_features == cfg.num_random_features, "num_random_features");
  expect(c.tau_attn == cfg.tau_attn, "tau_attn");
  expect(c.seed == cfg.seed, "seed");
}

}  // namespace gtca
