#include "gtca/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

#include "gtca/config.hpp"
#include "gtca/errors.hpp"
#include "gtca/parallel.hpp"

namespace gtca {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out_dir;
  std::size_t jobs = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string checkpoint;
};

struct Context {
  RunConfig cfg;
  fs::path out;
  fs::path checkpoint;
  bool checkpoint_given = false;
  std::ostream& log;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

std::string percent(const EvalResult& e) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f +- %.2f", e.mean, e.std);
  return buf;
}

Graph load_checked(const Context& ctx) {
  Graph g = load_dataset(ctx.cfg.dataset);
  ctx.cfg.train.validate(g.num_nodes);
  return g;
}

int cmd_train(Context& ctx) {
  const Graph g = load_checked(ctx);
  const TrainResult r = train(g, ctx.cfg.train);
  save_checkpoint(ctx.checkpoint, r.model, ctx.cfg.train);
  write_json(ctx.out / "train_report.json", r.report.to_json());
  write_json(ctx.out / "config.resolved.json", to_json(ctx.cfg));
  ctx.log << "trained " << r.report.epochs_run << " epochs, loss " << r.report.losses.front() << " -> "
          << r.report.losses.back() << "\ncheckpoint: " << ctx.checkpoint.string() << '\n';
  return kExitOk;
}

GtcaModel restore(const Context& ctx, const Graph& g) {
  const Checkpoint ck = load_checkpoint(ctx.checkpoint);
  check_compatible(ck, ctx.cfg.train, g.num_features());
  return ck.build_model();
}

int cmd_eval(Context& ctx) {
  const Graph g = load_checked(ctx);
  const auto splits = make_run_splits(g, ctx.cfg.splits);
  const GtcaModel model = restore(ctx, g);
  const auto [ht, hp] = model.embed(g.features, normalize_adjacency(g));
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : splits) seeds.push_back(s.seed);
  const EvalResult e =
      evaluate_over_splits(combine_embeddings(ht, hp, ctx.cfg.train.lambda), g.labels, splits, ctx.cfg.probe,
                           config_fingerprint({{"train", to_json(ctx.cfg.train)}, {"splits", seeds}}));
  write_json(ctx.out / "eval.json", e.to_json());
  ctx.log << "accuracy " << percent(e) << " over " << splits.size() << " splits\n";
  return kExitOk;
}

int cmd_ablate(Context& ctx) {
  const Graph g = load_checked(ctx);
  const auto splits = make_run_splits(g, ctx.cfg.splits);
  std::string csv = "variant,mean,std\n";
  nlohmann::json results = nlohmann::json::object();
  for (Variant v : ctx.cfg.ablate) {
    const EvalResult e = ablation_run(g, ctx.cfg.train, v, splits, ctx.cfg.probe);
    char buf[64];
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f\n", e.mean, e.std);
    csv += to_string(v) + buf;
    results[to_string(v)] = e.to_json();
    ctx.log << to_string(v) << ": " << percent(e) << '\n';
  }
  write_text(ctx.out / "ablation.csv", csv);
  write_json(ctx.out / "ablation.json", results);
  return kExitOk;
}

int cmd_sweep(Context& ctx) {
  if (!ctx.cfg.sweep) throw ConfigError("sweep", "the sweep command needs a 'sweep' section");
  const Graph g = load_checked(ctx);
  const auto splits = make_run_splits(g, ctx.cfg.splits);
  const SweepTable t =
      sensitivity_sweep(g, ctx.cfg.train, ctx.cfg.sweep->param, ctx.cfg.sweep->grid, splits, ctx.cfg.probe);
  const fs::path path = ctx.out / ("sweep_" + to_string(t.param) + ".csv");
  write_text(path, t.to_csv());
  ctx.log << t.rows.size() << " grid points written to " << path.string() << '\n';
  return kExitOk;
}

int cmd_analyze(Context& ctx) {
  const Graph g = load_checked(ctx);
  // Without a checkpoint the encoders are analyzed at their initialization.
  const GtcaModel model = ctx.checkpoint_given ? restore(ctx, g) : GtcaModel(ctx.cfg.train, g.num_features());
  const auto [ht, hp] = model.embed(g.features, normalize_adjacency(g));
  const NeighborSets sets = sample_sets(ht, hp, topology_view(g, ctx.cfg.train.k), ctx.cfg.train);
  nlohmann::json report = analysis_report(sets, g.labels, ctx.cfg.dump_sets);
  report["trained"] = ctx.checkpoint_given;
  write_json(ctx.out / "analysis.json", report);
  const Tensor h = combine_embeddings(ht, hp, ctx.cfg.train.lambda);
  const std::size_t dims = std::min(ctx.cfg.pca_dims, h.cols());
  write_text(ctx.out / "pca.csv", pca_csv(pca_project(h, dims), g.labels));
  ctx.log << "analysis written to " << (ctx.out / "analysis.json").string() << '\n';
  return kExitOk;
}

int cmd_gen_sbm(Context& ctx) {
  if (!ctx.cfg.dataset.sbm) throw ConfigError("dataset.sbm", "gen-sbm needs an sbm dataset section");
  const fs::path header = save_graph(generate_sbm(*ctx.cfg.dataset.sbm), ctx.out, "sbm");
  ctx.log << "wrote " << header.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph contrastive learning with GCN and linear-attention views"};
  app.require_subcommand(1);
  Options opts;

  using Command = std::function<int(Context&)>;
  std::vector<std::pair<CLI::App*, Command>> commands;
  auto add = [&](const char* name, const char* help, Command fn, bool takes_checkpoint) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "Run config (JSON)")->required();
    sub->add_option("--out", opts.out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { opts.seed = s, opts.seed_given = true; }, "Override train.seed");
    if (takes_checkpoint)
      sub->add_option("--checkpoint", opts.checkpoint, "Checkpoint path (default <out>/checkpoint.gtca)");
    commands.emplace_back(sub, std::move(fn));
  };
  add("train", "Train both encoders and write a checkpoint", cmd_train, true);
  add("eval", "Probe fused embeddings from a checkpoint over every split", cmd_eval, true);
  add("ablate", "Train and probe each configured variant", cmd_ablate, false);
  add("sweep", "Sensitivity sweep over k, E or lambda", cmd_sweep, false);
  add("analyze", "Correct ratios of the sampled sets and PCA coordinates", cmd_analyze, true);
  add("gen-sbm", "Write the configured SBM graph as dataset files", cmd_gen_sbm, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    set_worker_count(opts.jobs);
    RunConfig cfg = load_run_config(opts.config);
    if (opts.seed_given) cfg.train.seed = opts.seed;
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    fs::create_directories(cfg.output_dir);
    Context ctx{std::move(cfg), {}, {}, !opts.checkpoint.empty(), out};
    ctx.out = ctx.cfg.output_dir;
    ctx.checkpoint = opts.checkpoint.empty() ? ctx.out / "checkpoint.gtca" : fs::path(opts.checkpoint);
    for (auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(ctx);
    return kExitConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}

}  // namespace gtca
