#include "gtca/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "gtca/errors.hpp"
#include "gtca/parallel.hpp"

namespace gtca {

namespace {

using Matrix = Eigen::MatrixXd;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Tensor to_tensor(const Matrix& m) {
  Tensor t(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  Eigen::Map<RowMajor>(t.data(), m.rows(), m.cols()) = m;
  return t;
}

// Standardized rows with a trailing constant column for the bias.
Matrix design(const Tensor& x, const std::vector<double>& mean, const std::vector<double>& scale) {
  Matrix z(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols() + 1));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c)
      z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (x(r, c) - mean[c]) / scale[c];
    z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(x.cols())) = 1.0;
  }
  return z;
}

struct Objective {
  const Matrix& z;
  const std::vector<int>& y;
  double l2;

  // Returns the objective; fills `grad` when given.
  double operator()(const Matrix& w, Matrix* grad) const {
    const Eigen::Index n = z.rows(), f = w.rows() - 1;
    Matrix logits = z * w;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double peak = logits.row(i).maxCoeff();
      logits.row(i).array() = (logits.row(i).array() - peak).exp();
      const double total = logits.row(i).sum();
      loss += std::log(total) - std::log(logits(i, y[static_cast<std::size_t>(i)]));
      logits.row(i) /= total;
    }
    loss /= static_cast<double>(n);
    loss += 0.5 * l2 * w.topRows(f).squaredNorm();
    if (grad) {
      for (Eigen::Index i = 0; i < n; ++i) logits(i, y[static_cast<std::size_t>(i)]) -= 1.0;
      *grad = z.transpose() * logits / static_cast<double>(n);
      grad->topRows(f) += l2 * w.topRows(f);
    }
    return loss;
  }
};

double accuracy(const LogisticModel& m, const Tensor& h, const std::vector<int>& labels,
                const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  const auto pred = m.predict(gather_rows(h, rows));
  std::size_t hits = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) hits += pred[r] == labels[rows[r]];
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

std::vector<int> LogisticModel::predict(const Tensor& x) const {
  if (x.cols() + 1 != weights.rows()) throw ShapeError("logistic: input width does not match the fitted model");
  const Matrix w = view(weights);
  const Matrix logits = design(x, mean, scale) * w;
  std::vector<int> out(x.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);  // first maximum on ties
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

LogisticModel fit_logistic(const Tensor& x, const std::vector<int>& y, std::size_t num_classes, double l2,
                           const ProbeConfig& cfg) {
  if (x.rows() != y.size()) throw ShapeError("logistic: one label per row required");
  if (x.rows() == 0) throw ValidationError("logistic: no training rows");
  for (int label : y)
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
      throw ValidationError("logistic: label " + std::to_string(label) + " out of range");

  LogisticModel m;
  m.mean.assign(x.cols(), 0.0);
  m.scale.assign(x.cols(), 1.0);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double s = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) s += x(r, c);
    m.mean[c] = s / static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) sq += (x(r, c) - m.mean[c]) * (x(r, c) - m.mean[c]);
    const double sd = std::sqrt(sq / static_cast<double>(x.rows()));
    m.scale[c] = sd > 1e-12 ? sd : 1.0;
  }

  const Matrix z = design(x, m.mean, m.scale);
  const Objective objective{z, y, l2};
  Matrix w = Matrix::Zero(z.cols(), static_cast<Eigen::Index>(num_classes));
  Matrix grad;
  double value = objective(w, &grad);
  double step = 1.0;
  for (; m.iterations < cfg.max_iterations; ++m.iterations) {
    if (grad.cwiseAbs().maxCoeff() < cfg.tolerance) break;
    const double gsq = grad.squaredNorm();
    Matrix next;
    double next_value = 0.0;
    // Armijo backtracking; the step grows again after each accepted move.
    for (;;) {
      next = w - step * grad;
      next_value = objective(next, nullptr);
      if (next_value <= value - 0.5 * step * gsq || step < 1e-12) break;
      step *= 0.5;
    }
    w = std::move(next);
    value = objective(w, &grad);
    step = std::min(step * 2.0, 1e3);
  }
  m.weights = to_tensor(w);
  return m;
}

ProbeResult linear_probe(const Tensor& h, const std::vector<int>& labels, const SplitSet& split,
                         const ProbeConfig& cfg) {
  if (labels.size() != h.rows()) throw ValidationError("linear_probe: one label per node required");
  if (cfg.l2_grid.empty()) throw ConfigError("probe.l2_grid", "must not be empty");
  if (split.val.empty() || split.test.empty()) throw ValidationError("linear_probe: empty validation or test split");
  const std::size_t num_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);

  std::vector<int> train_labels;
  std::vector<bool> present(num_classes, false);
  for (std::size_t i : split.train) {
    train_labels.push_back(labels[i]);
    present[static_cast<std::size_t>(labels[i])] = true;
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (!present[c]) throw ValidationError("linear_probe: class " + std::to_string(c) + " has no training node");

  const Tensor train_x = gather_rows(h, split.train);
  ProbeResult best;
  best.val_accuracy = -1.0;
  for (double l2 : cfg.l2_grid) {
    LogisticModel m = fit_logistic(train_x, train_labels, num_classes, l2, cfg);
    const double val = accuracy(m, h, labels, split.val);
    if (val > best.val_accuracy) {
      best.val_accuracy = val;
      best.l2 = l2;
      best.model = std::move(m);
    }
  }
  best.test_accuracy = accuracy(best.model, h, labels, split.test);
  return best;
}

std::pair<double, double> mean_std_percent(std::vector<double> acc) {
  if (acc.empty()) return {0.0, 0.0};
  std::sort(acc.begin(), acc.end());
  if (acc.front() == acc.back()) return {100.0 * acc.front(), 0.0};  // avoid rounding noise in the std
  const double n = static_cast<double>(acc.size());
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
  double var = 0.0;
  for (double a : acc) var += (a - mean) * (a - mean);
  return {100.0 * mean, 100.0 * std::sqrt(var / n)};
}

nlohmann::json EvalResult::to_json() const {
  return {{"accuracies", accuracies}, {"chosen_l2", chosen_l2}, {"mean", mean},
          {"std", std},               {"fingerprint", fingerprint}};
}

EvalResult evaluate_over_splits(const Tensor& h, const std::vector<int>& labels, const std::vector<SplitSet>& splits,
                                const ProbeConfig& cfg, std::string fingerprint) {
  EvalResult r;
  r.accuracies.resize(splits.size());
  r.chosen_l2.resize(splits.size());
  parallel_for(splits.size(), [&](std::size_t s) {
    const ProbeResult p = linear_probe(h, labels, splits[s], cfg);
    r.accuracies[s] = p.test_accuracy;
    r.chosen_l2[s] = p.l2;
  });
  std::tie(r.mean, r.std) = mean_std_percent(r.accuracies);
  r.fingerprint = std::move(fingerprint);
  return r;
}

std::string config_fingerprint(const nlohmann::json& j) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

RunOutcome run_pipeline(const Graph& g, const TrainConfig& cfg, const std::vector<SplitSet>& splits,
                        const ProbeConfig& probe) {
  if (!g.has_labels()) throw ValidationError("evaluation needs a labeled graph");
  TrainResult trained = train(g, cfg);
  Tensor h = combine_embeddings(trained.h_theta, trained.h_phi, cfg.lambda);
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : splits) seeds.push_back(s.seed);
  EvalResult eval = evaluate_over_splits(h, g.labels, splits, probe,
                                         config_fingerprint({{"train", to_json(cfg)}, {"splits", seeds}}));
  return RunOutcome{std::move(trained), std::move(h), std::move(eval)};
}

EvalResult ablation_run(const Graph& g, TrainConfig cfg, Variant variant, const std::vector<SplitSet>& splits,
                        const ProbeConfig& probe) {
  cfg.variant = variant;
  return run_pipeline(g, cfg, splits, probe).eval;
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "k") return SweepParam::kK;
  if (name == "E" || name == "embedding_dim") return SweepParam::kEmbeddingDim;
  if (name == "lambda") return SweepParam::kLambda;
  throw ConfigError("sweep.param", "expected k, E or lambda, got '" + name + "'");
}

std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::kK: return "k";
    case SweepParam::kEmbeddingDim: return "E";
    case SweepParam::kLambda: return "lambda";
  }
  return "unknown";
}

CorrectRatios correct_ratios(const NeighborSets& sets, const std::vector<int>& labels) {
  CorrectRatios r;
  r.positives = correct_ratio(sets.positives, labels);
  r.b_theta = correct_ratio(sets.b_theta, labels);
  r.b_phi = correct_ratio(sets.b_phi, labels);
  if (!sets.topology.empty()) r.topology = correct_ratio(sets.topology, labels);
  return r;
}

std::string SweepTable::to_csv() const {
  std::ostringstream out;
  out << "param,value,mean,std,correct_positives,correct_b_theta,correct_b_phi,correct_topology\n";
  for (const auto& row : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.6g,%.4f,%.4f", row.value, row.mean, row.std);
    out << to_string(param) << ',' << buf << ',' << format_optional(row.ratios.positives) << ','
        << format_optional(row.ratios.b_theta) << ',' << format_optional(row.ratios.b_phi) << ','
        << format_optional(row.ratios.topology) << '\n';
  }
  return out.str();
}

SweepTable sensitivity_sweep(const Graph& g, const TrainConfig& base, SweepParam param,
                             const std::vector<double>& grid, const std::vector<SplitSet>& splits,
                             const ProbeConfig& probe) {
  if (grid.empty()) throw ConfigError("sweep.grid", "must not be empty");
  for (double v : grid) {
    if (param == SweepParam::kLambda ? !(v >= 0.0 && v <= 1.0) : !(v >= 1.0 && v == std::floor(v)))
      throw ConfigError("sweep.grid", "value " + std::to_string(v) + " is not valid for " + to_string(param));
  }

  SweepTable table;
  table.param = param;
  auto add_row = [&](double value, const EvalResult& e, const NeighborSets& sets) {
    table.rows.push_back({value, e.mean, e.std, correct_ratios(sets, g.labels)});
  };

  if (param == SweepParam::kLambda) {
    const TrainResult trained = train(g, base);
    for (double lambda : grid) {
      TrainConfig cfg = base;
      cfg.lambda = lambda;
      nlohmann::json seeds = nlohmann::json::array();
      for (const auto& s : splits) seeds.push_back(s.seed);
      const EvalResult e =
          evaluate_over_splits(combine_embeddings(trained.h_theta, trained.h_phi, lambda), g.labels, splits, probe,
                               config_fingerprint({{"train", to_json(cfg)}, {"splits", seeds}}));
      add_row(lambda, e, trained.sets);
    }
    return table;
  }

  for (double v : grid) {
    TrainConfig cfg = base;
    if (param == SweepParam::kK)
      cfg.k = static_cast<std::size_t>(v);
    else
      cfg.embedding_dim = static_cast<std::size_t>(v);
    const RunOutcome run = run_pipeline(g, cfg, splits, probe);
    add_row(v, run.eval, run.trained.sets);
  }
  return table;
}

PcaResult pca(const Tensor& h, std::size_t dims) {
  if (h.rows() < 2) throw ValidationError("pca: at least two points required");
  if (dims == 0 || dims > h.cols()) throw ValidationError("pca: dims must lie in [1, " + std::to_string(h.cols()) + "]");
  const Matrix x = view(h);
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(h.rows() - 1);
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw ValidationError("pca: eigendecomposition failed");

  const Eigen::Index f = cov.rows();
  Matrix comps(static_cast<Eigen::Index>(dims), f);
  PcaResult out;
  for (std::size_t d = 0; d < dims; ++d) {
    const Eigen::Index col = f - 1 - static_cast<Eigen::Index>(d);  // eigenvalues ascend
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index peak = 0;
    v.cwiseAbs().maxCoeff(&peak);
    if (v(peak) < 0) v = -v;
    comps.row(static_cast<Eigen::Index>(d)) = v.transpose();
    out.variances.push_back(std::max(solver.eigenvalues()(col), 0.0));
  }
  out.components = to_tensor(comps);
  out.coords = to_tensor(centered * comps.transpose());
  return out;
}

std::string pca_csv(const Tensor& coords, const std::vector<int>& labels) {
  std::ostringstream out;
  for (std::size_t c = 0; c < coords.cols(); ++c) out << "pc" << c + 1 << ',';
  out << "label\n";
  for (std::size_t r = 0; r < coords.rows(); ++r) {
    for (std::size_t c = 0; c < coords.cols(); ++c) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.10g", coords(r, c));
      out << buf << ',';
    }
    if (r < labels.size()) out << labels[r];
    out << '\n';
  }
  return out.str();
}

nlohmann::json analysis_report(const NeighborSets& sets, const std::vector<int>& labels, bool dump_sets) {
  const PositiveStats stats = positive_stats(sets);
  nlohmann::json report{{"num_nodes", sets.num_nodes()},
                        {"k", sets.k},
                        {"positive_stats", {{"mean", stats.mean}, {"min", stats.min}, {"max", stats.max}}}};
  if (!labels.empty()) {
    const CorrectRatios r = correct_ratios(sets, labels);
    report["correct_ratio"] = {{"positives", optional_json(r.positives)},
                               {"b_theta", optional_json(r.b_theta)},
                               {"b_phi", optional_json(r.b_phi)},
                               {"topology", optional_json(r.topology)}};
  } else {
    report["correct_ratio"] = nullptr;
  }
  if (dump_sets) report["positives"] = sets.positives;
  return report;
}

}  // namespace gtca
