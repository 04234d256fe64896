#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gtca/errors.hpp"
#include "gtca/loss.hpp"
#include "gtca/trainer.hpp"
#include "test_support.hpp"

using namespace gtca;
using gtca::testing::numeric_gradient;
using gtca::testing::random_tensor;
using gtca::testing::relative_error;

namespace fs = std::filesystem;

namespace {

Graph small_sbm(std::uint64_t seed = 0) {
  SbmParams p;
  p.block_sizes = {20, 20};
  p.p_in = 0.3;
  p.p_out = 0.02;
  p.feature_dim = 8;
  p.feature_shift = 2.0;
  p.seed = seed;
  return generate_sbm(p);
}

TrainConfig small_config() {
  TrainConfig c;
  c.k = 5;
  c.embedding_dim = 8;
  c.num_random_features = 16;
  c.epochs = 5;
  c.learning_rate = 0.01;
  c.seed = 3;
  return c;
}

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gtca_trainer_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(TrainConfig, RejectsOutOfRangeFieldsByName) {
  auto field_of = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    try {
      c.validate(100);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  EXPECT_EQ(field_of([](TrainConfig& c) { c.lambda = 1.5; }), "train.lambda");
  EXPECT_EQ(field_of([](TrainConfig& c) { c.k = 100; }), "train.k");
  EXPECT_EQ(field_of([](TrainConfig& c) { c.epochs = 0; }), "train.epochs");
  EXPECT_EQ(field_of([](TrainConfig& c) { c.tau_cl = 0.0; }), "train.tau_cl");
  EXPECT_EQ(field_of([](TrainConfig&) {}), "none");
}

TEST(TrainConfig, JsonRoundTripAndStrictKeys) {
  TrainConfig c = small_config();
  c.variant = Variant::kDualGcn;
  c.lambda = 0.25;
  EXPECT_EQ(train_config_from_json(to_json(c)), c);

  try {
    train_config_from_json(nlohmann::json{{"k", 3}, {"lamda", 0.5}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "train.lamda");
  }
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"k", -3}}), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"lambda", "high"}}), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"variant", "triple"}}), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w{{1.0, -2.0, 0.5}};
  const Tensor g{{0.3, -4.0, 0.0}};
  Adam adam(0.1, 0.9, 0.999, 1e-8, 0.0);
  adam.step({&w}, {&g});
  EXPECT_NEAR(w[0], 0.9, 1e-6);
  EXPECT_NEAR(w[1], -1.9, 1e-6);
  EXPECT_EQ(w[2], 0.5);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Model, VariantsPickEncoderKinds) {
  for (auto [variant, theta_gcn, phi_gcn] : {std::tuple{Variant::kFull, true, false},
                                              std::tuple{Variant::kNoTopology, true, false},
                                              std::tuple{Variant::kDualGcn, true, true},
                                              std::tuple{Variant::kDualTransformer, false, false}}) {
    TrainConfig c = small_config();
    c.variant = variant;
    const GtcaModel m(c, 8);
    EXPECT_EQ(std::holds_alternative<GcnEncoder>(m.theta()), theta_gcn) << to_string(variant);
    EXPECT_EQ(std::holds_alternative<GcnEncoder>(m.phi()), phi_gcn) << to_string(variant);
    EXPECT_EQ(m.parameters().size(), m.parameter_names().size());
  }
}

TEST(Model, DualViewsStartFromDifferentWeights) {
  TrainConfig c = small_config();
  c.variant = Variant::kDualGcn;
  const GtcaModel m(c, 8);
  EXPECT_NE(*m.parameters()[0], *m.parameters()[2]);
}

// Total loss through both encoders, with the positive sets and Gumbel draws
// held fixed while individual weights are perturbed.
TEST(Model, LossGradientMatchesFiniteDifferences) {
  std::mt19937_64 data(41);
  std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 3}};
  const Graph g = make_graph(6, edges, random_tensor(6, 5, data));
  TrainConfig c;
  c.k = 2;
  c.embedding_dim = 3;
  c.num_random_features = 8;
  c.seed = 5;
  GtcaModel model(c, 5);
  const SparseMatrix ahat = normalize_adjacency(g);
  const IndexSets topo = topology_view(g, c.k);

  auto loss_at = [&](const GtcaModel& m, const IndexSets* fixed, Gradients* grads, std::vector<Var>* bound) {
    Tape tape;
    Rng rng(99);
    ViewOutputs v = m.forward(tape, g.features, ahat, Mode::kTrain, rng);
    const IndexSets pos = fixed ? *fixed : sample_sets(v.theta.value(), v.phi.value(), topo, c).positives;
    Var loss = total_loss(v.theta, v.phi, pos, LossConfig{c.tau_cl});
    if (grads) *grads = tape.backward(loss);
    if (bound) *bound = v.bound;
    return std::pair{loss.value()[0], pos};
  };

  auto [base, positives] = loss_at(model, nullptr, nullptr, nullptr);
  ASSERT_TRUE(std::isfinite(base));
  Gradients grads;
  std::vector<Var> bound;
  loss_at(model, &positives, &grads, &bound);

  const auto params = model.parameters();
  const auto names = model.parameter_names();
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor saved = *params[p];
    auto f = [&](const Tensor& w) {
      GtcaModel probe = model;
      *probe.parameters()[p] = w;
      return loss_at(probe, &positives, nullptr, nullptr).first;
    };
    EXPECT_LT(relative_error(grads.of(bound[p]), numeric_gradient(f, saved)), 1e-4) << names[p];
  }
}

TEST(Train, SingleEpochRunsOneStep) {
  TrainConfig c = small_config();
  c.epochs = 1;
  const Graph g = small_sbm();
  const TrainResult r = train(g, c);
  EXPECT_EQ(r.report.losses.size(), 1u);
  EXPECT_EQ(r.report.epochs_run, 1u);
  EXPECT_NE(*r.model.parameters()[0], *GtcaModel(c, g.num_features()).parameters()[0]);
  EXPECT_EQ(r.h_theta.rows(), g.num_nodes);
  EXPECT_EQ(r.h_theta.cols(), c.embedding_dim);
}

TEST(Train, FixedSeedsAreBitReproducible) {
  const Graph g = small_sbm();
  const TrainConfig c = small_config();
  const TrainResult a = train(g, c), b = train(g, c);
  EXPECT_EQ(a.report.losses, b.report.losses);
  EXPECT_EQ(a.report.positives, b.report.positives);
  EXPECT_EQ(a.h_theta, b.h_theta);
  EXPECT_EQ(a.h_phi, b.h_phi);
  EXPECT_EQ(a.sets.positives, b.sets.positives);
}

TEST(Train, LossDecreasesOnSbm) {
  SbmParams p;
  p.feature_shift = 2.0;
  const Graph g = generate_sbm(p);
  TrainConfig c;
  c.k = 10;
  c.embedding_dim = 16;
  c.num_random_features = 32;
  c.epochs = 100;
  c.patience = 0;
  c.seed = 1;
  const TrainResult r = train(g, c);
  ASSERT_EQ(r.report.losses.size(), 100u);
  EXPECT_LT(r.report.losses.back(), r.report.losses.front());
}

TEST(Train, PatienceStopsOnPlateau) {
  TrainConfig c = small_config();
  c.epochs = 200;
  c.patience = 3;
  c.min_delta = 1e9;  // nothing counts as an improvement after the first epoch
  const TrainResult r = train(small_sbm(), c);
  EXPECT_EQ(r.report.epochs_run, 4u);
  EXPECT_TRUE(r.report.stopped_early);
  EXPECT_EQ(r.report.losses.size(), r.report.epochs_run);
}

TEST(Train, NonFiniteLossReportsWhere) {
  TrainConfig c = small_config();
  c.tau_cl = 1e-310;
  try {
    train(small_sbm(), c);
    FAIL();
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.epoch(), 0u);
    EXPECT_EQ(e.view(), "theta");
  }
}

TEST(Train, KMustBeBelowNodeCount) {
  TrainConfig c = small_config();
  c.k = 40;
  EXPECT_THROW(train(small_sbm(), c), ConfigError);
}

TEST(Train, NoTopologyVariantLeavesTopologyEmpty) {
  TrainConfig c = small_config();
  c.variant = Variant::kNoTopology;
  const TrainResult r = train(small_sbm(), c);
  EXPECT_TRUE(r.sets.topology.empty());
  for (std::size_t i = 0; i < r.sets.num_nodes(); ++i)
    EXPECT_EQ(r.sets.positives[i], intersect_sorted(r.sets.b_theta[i], r.sets.b_phi[i]));
}

TEST(Combine, EndpointsAndFixpoint) {
  std::mt19937_64 rng(42);
  const Tensor a = random_tensor(6, 4, rng, 3.0), b = random_tensor(6, 4, rng);
  Tape t;
  const Tensor na = row_l2_normalize(t.constant(a)).value(), nb = row_l2_normalize(t.constant(b)).value();
  EXPECT_LT(max_abs_diff(combine_embeddings(a, b, 1.0), na), 1e-15);
  EXPECT_LT(max_abs_diff(combine_embeddings(a, b, 0.0), nb), 1e-15);
  EXPECT_LT(max_abs_diff(combine_embeddings(a, a, 0.5), na), 1e-15);
  EXPECT_LT(max_abs_diff(combine_embeddings(na, nb, 0.3), combine_embeddings(a, b, 0.3)), 1e-15);
  EXPECT_THROW(combine_embeddings(a, b, -0.1), ConfigError);
}

TEST(Checkpoint, RoundTripRestoresWeights) {
  const Graph g = small_sbm();
  const TrainConfig c = small_config();
  const TrainResult r = train(g, c);
  const fs::path path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, r.model, c);
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.config, c);
  const GtcaModel restored = ck.build_model();
  const auto [ht, hp] = restored.embed(g.features, normalize_adjacency(g));
  EXPECT_EQ(ht, r.h_theta);
  EXPECT_EQ(hp, r.h_phi);
  EXPECT_NO_THROW(check_compatible(ck, c, g.num_features()));
}

TEST(Checkpoint, MismatchAndCorruptionAreRejected) {
  const TrainConfig c = small_config();
  const GtcaModel m(c, 8);
  const fs::path path = temp_path("mismatch.ckpt");
  save_checkpoint(path, m, c);
  const Checkpoint ck = load_checkpoint(path);

  TrainConfig other = c;
  other.embedding_dim = 16;
  EXPECT_THROW(check_compatible(ck, other, 8), ValidationError);
  EXPECT_THROW(check_compatible(ck, c, 9), ValidationError);
  other = c;
  other.lambda = 0.1;  // fusion weight is not part of the architecture
  EXPECT_NO_THROW(check_compatible(ck, other, 8));

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
  };
  write(bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  std::string bumped = bytes;
  bumped.replace(bytes.find(" v1"), 3, " v9");
  write(bumped);
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  write("not a checkpoint\n");
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  EXPECT_THROW(load_checkpoint(temp_path("absent.ckpt")), ValidationError);
}
