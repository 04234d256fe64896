#include "gtca/config.hpp"

#include <fstream>

#include "gtca/errors.hpp"
#include "gtca/json_fields.hpp"

namespace gtca {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

SbmParams parse_sbm(const nlohmann::json& j) {
  FieldReader r(j, "dataset.sbm");
  SbmParams p;
  if (const auto* blocks = r.child("block_sizes")) {
    if (!blocks->is_array() || blocks->empty()) throw ConfigError("dataset.sbm.block_sizes", "expected a non-empty array");
    p.block_sizes.clear();
    for (const auto& b : *blocks) {
      p.block_sizes.push_back(FieldReader::convert<std::size_t>(b, "dataset.sbm.block_sizes"));
      if (p.block_sizes.back() == 0) throw ConfigError("dataset.sbm.block_sizes", "blocks must be non-empty");
    }
  }
  r.read("p_in", p.p_in);
  r.read("p_out", p.p_out);
  r.read("feature_dim", p.feature_dim);
  r.read("feature_shift", p.feature_shift);
  r.read("seed", p.seed);
  r.finish();
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0)) throw ConfigError("dataset.sbm.p_in", "must lie in [0, 1]");
  if (!(p.p_out >= 0.0 && p.p_out <= 1.0)) throw ConfigError("dataset.sbm.p_out", "must lie in [0, 1]");
  if (p.feature_dim == 0) throw ConfigError("dataset.sbm.feature_dim", "must be at least 1");
  return p;
}

DatasetSpec parse_dataset(const nlohmann::json& j, const fs::path& base) {
  FieldReader r(j, "dataset");
  DatasetSpec d;
  std::string header;
  const bool has_header = r.read("header", header);
  const nlohmann::json* sbm = r.child("sbm");
  r.finish();
  if (has_header == (sbm != nullptr)) throw ConfigError("dataset", "set exactly one of 'header' or 'sbm'");
  if (has_header) d.header = resolve(base, header);
  if (sbm) d.sbm = parse_sbm(*sbm);
  return d;
}

SplitSpec parse_splits(const nlohmann::json& j) {
  FieldReader r(j, "splits");
  SplitSpec s;
  r.read("train_per_class", s.train_per_class);
  std::size_t total = 0, per_class = 0;
  const bool t = r.read("val_total", total);
  const bool p = r.read("val_per_class", per_class);
  if (t && p) throw ConfigError("splits", "set at most one of 'val_total' or 'val_per_class'");
  if (t) s.val = ValSpec::total(total);
  if (p) s.val = ValSpec::per_class(per_class);
  r.read("count", s.count);
  r.read("seed", s.seed);
  r.finish();
  if (s.train_per_class == 0) throw ConfigError("splits.train_per_class", "must be at least 1");
  if (s.val.count == 0) throw ConfigError(t ? "splits.val_total" : "splits.val_per_class", "must be at least 1");
  if (s.count == 0) throw ConfigError("splits.count", "must be at least 1");
  return s;
}

ProbeConfig parse_probe(const nlohmann::json& j) {
  FieldReader r(j, "probe");
  ProbeConfig p;
  if (const auto* grid = r.child("l2_grid")) {
    if (!grid->is_array() || grid->empty()) throw ConfigError("probe.l2_grid", "expected a non-empty array");
    p.l2_grid.clear();
    for (const auto& v : *grid) {
      p.l2_grid.push_back(FieldReader::convert<double>(v, "probe.l2_grid"));
      if (!(p.l2_grid.back() >= 0.0)) throw ConfigError("probe.l2_grid", "strengths must be non-negative");
    }
  }
  r.read("tolerance", p.tolerance);
  r.read("max_iterations", p.max_iterations);
  r.finish();
  if (!(p.tolerance > 0.0)) throw ConfigError("probe.tolerance", "must be positive");
  return p;
}

SweepSpec parse_sweep(const nlohmann::json& j) {
  FieldReader r(j, "sweep");
  SweepSpec s;
  s.param = parse_sweep_param(r.require<std::string>("param"));
  const nlohmann::json* grid = r.child("grid");
  if (!grid || !grid->is_array() || grid->empty()) throw ConfigError("sweep.grid", "expected a non-empty array");
  for (const auto& v : *grid) s.grid.push_back(FieldReader::convert<double>(v, "sweep.grid"));
  r.finish();
  return s;
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  FieldReader r(j, "");
  RunConfig c;
  const nlohmann::json* dataset = r.child("dataset");
  if (!dataset) throw ConfigError("dataset", "missing required key");
  c.dataset = parse_dataset(*dataset, base_dir);
  if (const auto* t = r.child("train")) c.train = train_config_from_json(*t, "train");
  if (const auto* s = r.child("splits")) c.splits = parse_splits(*s);
  if (const auto* p = r.child("probe")) c.probe = parse_probe(*p);
  std::string out;
  c.output_dir = r.read("output_dir", out) ? resolve(base_dir, out) : base_dir / c.output_dir;
  if (const auto* s = r.child("sweep")) c.sweep = parse_sweep(*s);
  if (const auto* a = r.child("ablate")) {
    FieldReader ar(*a, "ablate");
    if (const auto* variants = ar.child("variants")) {
      if (!variants->is_array() || variants->empty()) throw ConfigError("ablate.variants", "expected a non-empty array");
      c.ablate.clear();
      for (const auto& v : *variants) {
        try {
          c.ablate.push_back(parse_variant(FieldReader::convert<std::string>(v, "ablate.variants")));
        } catch (const ConfigError& e) {
          throw ConfigError("ablate.variants", e.what());
        }
      }
    }
    ar.finish();
  }
  if (const auto* a = r.child("analyze")) {
    FieldReader ar(*a, "analyze");
    ar.read("dump_sets", c.dump_sets);
    ar.read("pca_dims", c.pca_dims);
    ar.finish();
    if (c.pca_dims == 0) throw ConfigError("analyze.pca_dims", "must be at least 1");
  }
  r.finish();
  c.train.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json dataset;
  if (c.dataset.sbm) {
    const SbmParams& p = *c.dataset.sbm;
    dataset["sbm"] = {{"block_sizes", p.block_sizes}, {"p_in", p.p_in},
                      {"p_out", p.p_out},             {"feature_dim", p.feature_dim},
                      {"feature_shift", p.feature_shift}, {"seed", p.seed}};
  } else {
    dataset["header"] = c.dataset.header.string();
  }
  nlohmann::json splits{{"train_per_class", c.splits.train_per_class}, {"count", c.splits.count},
                        {"seed", c.splits.seed}};
  splits[c.splits.val.kind == ValSpec::Kind::kTotal ? "val_total" : "val_per_class"] = c.splits.val.count;
  nlohmann::json variants = nlohmann::json::array();
  for (Variant v : c.ablate) variants.push_back(to_string(v));
  nlohmann::json out{{"dataset", dataset},
                     {"train", to_json(c.train)},
                     {"splits", splits},
                     {"probe",
                      {{"l2_grid", c.probe.l2_grid},
                       {"tolerance", c.probe.tolerance},
                       {"max_iterations", c.probe.max_iterations}}},
                     {"output_dir", c.output_dir.string()},
                     {"ablate", {{"variants", variants}}},
                     {"analyze", {{"dump_sets", c.dump_sets}, {"pca_dims", c.pca_dims}}}};
  if (c.sweep) out["sweep"] = {{"param", to_string(c.sweep->param)}, {"grid", c.sweep->grid}};
  return out;
}

Graph load_dataset(const DatasetSpec& spec) {
  if (spec.sbm) return generate_sbm(*spec.sbm);
  return load_graph_header(spec.header);
}

std::vector<SplitSet> make_run_splits(const Graph& g, const SplitSpec& spec) {
  if (!g.has_labels()) throw ValidationError("splits need a labeled graph");
  return make_split_family(g, spec.train_per_class, spec.val, spec.count, spec.seed);
}

}  // namespace gtca
