#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "simlab/config.hpp"
#include "simlab/flow.hpp"
#include "simlab/liegeom.hpp"
#include "simlab/model_json.hpp"
#include "simlab/report.hpp"
#include "simlab/rng.hpp"
#include "simlab/symmetry.hpp"
#include "simlab/verify.hpp"

namespace {

using nlohmann::json;
using namespace simlab;

constexpr int kExitOk = 0;
constexpr int kExitSuiteFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitAmbiguity = 3;
constexpr int kExitBlowUp = 4;

json finalize_report(json report, const json& resolved_config) {
  report["config_resolved"] = resolved_config;
  report["toolkit"] = kToolkitVersion;
  return report;
}

ModelWithTheta require_model(const json& cfg) {
  if (!cfg.contains("model")) throw ConfigError("config needs a \"model\" object");
  return model_from_json(cfg["model"]);
}

Vec resolve_theta(const json& cfg, const ModelWithTheta& mt) {
  const Model& model = mt.model;
  if (cfg.contains("theta")) {
    const json& spec = cfg["theta"];
    if (spec.is_array()) {
      const auto flat = spec.get<std::vector<double>>();
      if (static_cast<int>(flat.size()) != model.param_count()) {
        throw ConfigError("theta length does not match the model");
      }
      return Eigen::Map<const Vec>(flat.data(), flat.size());
    }
    if (spec.contains("random")) {
      Rng rng(spec["random"]["seed"].get<std::uint64_t>());
      const double scale = spec["random"].value("scale", 1.0);
      Vec theta(model.param_count());
      for (int i = 0; i < theta.size(); ++i) theta(i) = scale * rng.gaussian();
      return theta;
    }
    if (spec.contains("leaf")) {
      if (model.kind() != ModelKind::two_layer) {
        throw ConfigError("leaf theta recipes require a two_layer model");
      }
      const json& leaf_spec = spec["leaf"];
      NeuronPartition leaf;
      leaf.mode = leaf_spec["mode"].get<std::string>() == "sign" ? PartitionMode::sign
                                                                 : PartitionMode::equality;
      for (const auto& jb : leaf_spec["blocks"]) {
        std::vector<int> b;
        for (const auto& v : jb) b.push_back(v.get<int>() - 1);
        leaf.blocks.push_back(std::move(b));
      }
      for (const auto& v : leaf_spec["zero_block"]) {
        leaf.zero_block.push_back(v.get<int>() - 1);
      }
      leaf.gamma.assign(model.width(), 1);
      const auto gamma = leaf_spec["gamma"].get<std::vector<int>>();
      for (std::size_t i = 0; i < gamma.size() && i < leaf.gamma.size(); ++i) {
        leaf.gamma[i] = gamma[i];
      }
      if (leaf.m() != model.width()) {
        throw ConfigError("leaf recipe does not cover every neuron");
      }
      return construct_leaf_member(leaf, model.input_dim(),
                                   leaf_spec["seed"].get<std::uint64_t>())
          .flatten();
    }
    throw ConfigError("unrecognized theta spec");
  }
  if (mt.theta) return *mt.theta;
  throw ConfigError("config needs \"theta\" (array, random, or leaf recipe)");
}

Dataset dataset_from_config(const json& flow_cfg, int d) {
  const json& ds = flow_cfg["dataset"];
  const auto gen = ds["generator"].get<std::string>() == "teacher"
                       ? DatasetGenerator::teacher
                       : DatasetGenerator::gaussian_iid;
  if (gen == DatasetGenerator::teacher) {
    if (!ds.contains("teacher")) throw ConfigError("teacher dataset needs a teacher spec");
    ModelWithTheta teacher = model_from_json(ds["teacher"]);
    if (!teacher.theta) throw ConfigError("teacher spec needs theta");
    TeacherSpec spec{teacher.model, *teacher.theta};
    return make_dataset(ds["n"].get<int>(), d, gen, ds["seed"].get<std::uint64_t>(),
                        &spec);
  }
  return make_dataset(ds["n"].get<int>(), d, gen, ds["seed"].get<std::uint64_t>());
}

std::vector<int> track_coords_from_config(const json& flow_cfg, const Model& model) {
  std::vector<int> coords;
  for (const auto& entry : flow_cfg["track_entries"]) {
    if (entry.contains("coord")) {
      coords.push_back(entry["coord"].get<int>());
      continue;
    }
    if (!entry.contains("layer") || !entry.contains("row")) {
      throw ConfigError("track entry needs coord or layer/row");
    }
    if (model.kind() != ModelKind::mlp) {
      throw ConfigError("layer/row track entries require an mlp model");
    }
    DeepParams probe = DeepParams::zeros(model.widths());
    const int l = entry["layer"].get<int>() - 1;
    const int i = entry["row"].get<int>() - 1;
    if (l < 0 || l >= probe.layer_count() || i < 0 || i >= probe.widths[l + 1]) {
      throw ConfigError("track entry indices out of range");
    }
    if (entry.contains("col")) {
      const int j = entry["col"].get<int>() - 1;
      if (j < 0 || j >= probe.widths[l]) throw ConfigError("track entry col out of range");
      coords.push_back(probe.flat_index_W(l, i, j));
    } else {
      coords.push_back(probe.flat_index_b(l, i));
    }
  }
  return coords;
}

// ------------------------------------------------------------------ analyze

json run_analyze(const json& cfg) {
  ModelWithTheta mt = require_model(cfg);
  const Model& model = mt.model;
  const Vec theta = resolve_theta(cfg, mt);
  const json& an = cfg["analysis"];

  LieSpanConfig lc;
  lc.n_anchors = an["n_anchors"].get<int>();
  lc.bracket_depth = an["bracket_depth"].get<int>();
  lc.rank_tol = an["rank_tol"].get<double>();
  lc.seed = cfg["seed"].get<std::uint64_t>();
  lc.max_fields = an["max_fields"].get<int>();
  lc.bracket_candidates = an["bracket_candidates"].get<int>();
  const LieSpanReport rank = lie_span_rank(model, theta, lc);

  json report;
  report["model"] = model_to_json(model, &theta);
  json jr;
  jr["rank"] = rank.rank;
  jr["singular_values"] = rank.singular_values;
  jr["gap_ratio"] = rank.gap_ratio;
  jr["n_fields"] = rank.n_fields;
  jr["bracket_depth"] = rank.bracket_depth;
  jr["rank_tol"] = rank.rank_tol;
  jr["confident"] = rank.confident;
  report["lie_rank_report"] = jr;

  if (model.kind() == ModelKind::two_layer) {
    const TwoLayerParams p = model.as_two_layer(theta);
    std::string mode_name = an["mode"].get<std::string>();
    if (mode_name == "auto") {
      mode_name = model.act().parity == Parity::odd ? "sign" : "equality";
    }
    const PartitionMode mode =
        mode_name == "sign" ? PartitionMode::sign : PartitionMode::equality;
    if (mode == PartitionMode::sign && model.act().parity != Parity::odd) {
      throw ConfigError("sign-mode classification requires an odd activation");
    }
    const NeuronPartition part =
        classify_partition(p, mode, an["classify_tol"].get<double>());
    const int predicted = predicted_leaf_dim(part, model.input_dim(), mode);
    report["partition"] = partition_to_json(part);
    report["stabilizer_order"] = stabilizer_order(part);
    report["degeneracy"] = degeneracy_to_json(degeneracy_report(p, 1e-9));
    report["predicted_dim"] = predicted;
    report["match"] = rank.rank == predicted;
  }
  return report;
}

// --------------------------------------------------------------------- flow

int run_flow(const json& cfg, const std::string& out_dir, json& summary_out) {
  ModelWithTheta mt = require_model(cfg);
  const Model& model = mt.model;
  const Vec theta0 = resolve_theta(cfg, mt);
  const json& fl = cfg["flow"];

  FlowConfig fc;
  fc.T = fl["T"].get<double>();
  fc.dt = fl["dt"].get<double>();
  fc.scheme = fl["scheme"].get<std::string>() == "rk4_adaptive" ? Scheme::rk4_adaptive
                                                                : Scheme::rk4;
  fc.snapshot_stride = fl["snapshot_stride"].get<int>();
  fc.blowup_norm = fl["blowup_norm"].get<double>();
  fc.adaptive_tol = fl["adaptive_tol"].get<double>();
  for (const auto& jm : fl["monitors"]) fc.monitors.push_back(sim_from_json(jm));
  fc.track_coords = track_coords_from_config(fl, model);

  const Dataset data = dataset_from_config(fl, model.input_dim());
  const LossFn loss{loss_kind_from_string(fl["loss"].get<std::string>())};
  const FlowTrajectory traj = integrate(model, theta0, data, loss, fc);

  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  write_file_atomic(out_dir + "/trajectory.csv", csv.str());

  json summary;
  summary["status"] = traj.status == FlowStatus::completed  ? "completed"
                      : traj.status == FlowStatus::blew_up ? "blew_up"
                                                           : "ambiguous";
  summary["n_snapshots"] = traj.snapshot_count();
  summary["final_loss"] = traj.loss_values.back();
  summary["final_time"] = traj.times.back();
  json drifts = json::object();
  for (const auto& [name, values] : traj.monitor_channels) {
    double worst = 0.0;
    for (double v : values) worst = std::max(worst, v);
    drifts[name] = worst;
  }
  summary["max_drift"] = drifts;
  if (model.kind() == ModelKind::two_layer) {
    const CondensationChannels cc =
        condensation_metrics(traj, fl["condensation_tol"].get<double>());
    json cond;
    cond["effective_neurons_final"] = cc.effective_neurons.back();
    cond["max_pair_alignment_final"] = cc.max_pair_alignment.back();
    summary["condensation"] = cond;
  }
  summary_out = summary;
  return traj.status == FlowStatus::blew_up ? kExitBlowUp : kExitOk;
}

// ------------------------------------------------------------------- verify

SuiteConfig suite_config_from_json(const json& vf, std::uint64_t seed) {
  SuiteConfig sc;
  sc.seed = seed;
  sc.m = vf["sizes"]["m"].get<int>();
  sc.d = vf["sizes"]["d"].get<int>();
  if (vf["sizes"].contains("widths")) {
    sc.widths = vf["sizes"]["widths"].get<std::vector<int>>();
  }
  sc.activation = vf["activation"].get<std::string>();
  sc.n_trials = vf["n_trials"].get<int>();
  sc.T = vf["T"].get<double>();
  sc.dt = vf["dt"].get<double>();
  return sc;
}

int run_verify(const json& cfg, json& report_out) {
  const json& vf = cfg.at("verify");
  const std::string suite = vf["suite"].get<std::string>();
  const SuiteConfig sc = suite_config_from_json(vf, cfg["seed"].get<std::uint64_t>());

  ScenarioResult result;
  if (suite == "linear_baseline") {
    const json& jb = vf["basis"];
    LinearBasis basis = jb["kind"].get<std::string>() == "fourier"
                            ? LinearBasis::fourier1d()
                            : LinearBasis::monomial(jb["d"].get<int>(),
                                                    jb["degree"].get<int>());
    result = linear_baseline_check(basis, sc);
  } else {
    const auto names = theorem_suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end()) {
      throw ConfigError("unknown suite: " + suite);
    }
    result = theorem_suite(suite, sc);
  }
  report_out = scenario_to_json(result);
  return result.passed ? kExitOk : kExitSuiteFailure;
}

// -------------------------------------------------------------------- sweep

void apply_override(json& cfg, const std::string& dotted, const json& value) {
  json* cur = &cfg;
  std::string rest = dotted;
  while (true) {
    const auto dot = rest.find('.');
    if (dot == std::string::npos) {
      (*cur)[rest] = value;
      return;
    }
    cur = &(*cur)[rest.substr(0, dot)];
    rest = rest.substr(dot + 1);
  }
}

int run_sweep(const json& cfg, const std::string& out_dir) {
  const json& sw = cfg.at("sweep");
  const std::string command = sw["command"].get<std::string>();
  const json& grid = sw["grid"];
  if (grid.empty()) throw ConfigError("sweep grid must be non-empty");

  std::vector<std::string> keys;
  std::vector<std::vector<json>> values;
  std::size_t n_points = 1;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      throw ConfigError("sweep grid entries must be non-empty arrays");
    }
    keys.push_back(it.key());
    values.push_back(std::vector<json>(it.value().begin(), it.value().end()));
    n_points *= values.back().size();
  }

  struct Point {
    json assignment;
    json config;  // resolved (non-leaves commands)
    std::string file;
    bool ok = false;
    json report;
  };
  std::vector<Point> points(n_points);
  const std::uint64_t base_seed = cfg["seed"].get<std::uint64_t>();

  for (std::size_t idx = 0; idx < n_points; ++idx) {
    Point& pt = points[idx];
    std::size_t rem = idx;
    pt.assignment = json::object();
    json raw = sw.contains("config") ? sw["config"] : json::object();
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const json& v = values[k][rem % values[k].size()];
      rem /= values[k].size();
      pt.assignment[keys[k]] = v;
      if (command != "leaves") apply_override(raw, keys[k], v);
    }
    if (command != "leaves") {
      if (!raw.contains("seed")) {
        raw["seed"] = base_seed ^ static_cast<std::uint64_t>(idx);
      }
      pt.config = config::resolve_run_config(raw);
    }
    pt.file = "point_" + std::to_string(idx) + ".json";
  }

  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SIMLAB_THREADS")) {
    threads = std::max(1, std::atoi(env));
  }
  threads = std::min<int>(threads, static_cast<int>(n_points));

  auto run_point = [&](Point& pt) {
    json report;
    try {
      if (command == "analyze") {
        report = run_analyze(pt.config);
        pt.ok = !report.contains("match") || report["match"].get<bool>();
      } else if (command == "flow") {
        const std::string dir = out_dir + "/" + pt.file.substr(0, pt.file.size() - 5);
        json summary;
        pt.ok = run_flow(pt.config, dir, summary) == kExitOk;
        report = summary;
      } else if (command == "verify") {
        pt.ok = run_verify(pt.config, report) == kExitOk;
      } else {  // leaves
        const int m = pt.assignment.value("m", 2);
        const PartitionMode mode =
            sw["leaves"]["mode"].get<std::string>() == "sign" ? PartitionMode::sign
                                                              : PartitionMode::equality;
        const auto leaves = enumerate_leaves(m, mode);
        report["m"] = m;
        report["mode"] = sw["leaves"]["mode"];
        report["leaf_count"] = leaves.size();
        json jl = json::array();
        for (const auto& leaf : leaves) jl.push_back(partition_to_json(leaf));
        report["leaves"] = jl;
        pt.ok = true;
      }
    } catch (const std::exception& e) {
      report = json{{"error", e.what()}};
      pt.ok = false;
    }
    pt.report = finalize_report(std::move(report),
                                command == "leaves" ? json::object() : pt.config);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= n_points) return;
      run_point(points[idx]);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  json index;
  json jp = json::array();
  bool all_ok = true;
  for (std::size_t idx = 0; idx < n_points; ++idx) {
    write_report(out_dir + "/" + points[idx].file, points[idx].report);
    json entry;
    entry["index"] = idx;
    entry["point"] = points[idx].assignment;
    entry["file"] = points[idx].file;
    entry["ok"] = points[idx].ok;
    if (command == "leaves") entry["leaf_count"] = points[idx].report["leaf_count"];
    jp.push_back(entry);
    all_ok = all_ok && points[idx].ok;
  }
  index["command"] = command;
  index["points"] = jp;
  index["passed"] = all_ok;
  write_report(out_dir + "/index.json", finalize_report(std::move(index), cfg));
  return all_ok ? kExitOk : kExitSuiteFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural-invariant-manifold analysis for analytic models"};
  app.require_subcommand(1);

  std::string config_path, out_path, suite_flag;

  auto* analyze = app.add_subcommand("analyze", "Classify theta and estimate span rank");
  analyze->add_option("--config", config_path, "Run config JSON")->required();
  analyze->add_option("--out", out_path, "Report path")->required();

  auto* flow = app.add_subcommand("flow", "Integrate the gradient flow");
  flow->add_option("--config", config_path, "Run config JSON")->required();
  flow->add_option("--out", out_path, "Output directory")->required();

  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  verify->add_option("--config", config_path, "Run config JSON");
  verify->add_option("--out", out_path, "Report path");
  verify->add_option("--suite", suite_flag, "Suite name (overrides config)");

  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments");
  sweep->add_option("--config", config_path, "Run config JSON")->required();
  sweep->add_option("--out", out_path, "Output directory")->required();

  auto* list = app.add_subcommand("list-activations", "Print the activation registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    if (list->parsed()) {
      for (const auto& name : activation_names()) {
        const auto& a = activation(name);
        std::cout << name << "  parity=" << to_string(a.parity)
                  << "  class=" << to_string(a.classification)
                  << "  sigma(0)=" << a.value_at_zero
                  << "  sigma'(0)=" << a.deriv_at_zero << "\n";
      }
      return kExitOk;
    }

    json cfg;
    if (!config_path.empty()) {
      cfg = config::load_config_file(config_path);
    } else if (verify->parsed() && !suite_flag.empty()) {
      cfg = config::resolve_run_config(json{{"verify", {{"suite", suite_flag}}}});
    } else {
      throw ConfigError("--config is required");
    }
    if (verify->parsed() && !suite_flag.empty()) {
      cfg["verify"]["suite"] = suite_flag;
    }

    if (analyze->parsed()) {
      const json report = finalize_report(run_analyze(cfg), cfg);
      write_report(out_path, report);
      return kExitOk;
    }
    if (flow->parsed()) {
      json summary;
      const int code = run_flow(cfg, out_path, summary);
      write_report(out_path + "/summary.json", finalize_report(std::move(summary), cfg));
      return code;
    }
    if (verify->parsed()) {
      json report;
      const int code = run_verify(cfg, report);
      if (out_path.empty()) {
        std::cout << dump_canonical(finalize_report(std::move(report), cfg)) << "\n";
      } else {
        write_report(out_path, finalize_report(std::move(report), cfg));
      }
      return code;
    }
    if (sweep->parsed()) {
      return run_sweep(cfg, out_path);
    }
  } catch (const AmbiguityError& e) {
    std::cerr << "ambiguity: " << e.what() << "\n";
    return kExitAmbiguity;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSuiteFailure;
  }
  return kExitConfigError;
}
