#include "simlab/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "simlab/rng.hpp"

namespace simlab {

// ----------------------------------------------------------------- dataset

Dataset make_dataset(int n, int d, DatasetGenerator gen, std::uint64_t seed,
                     const TeacherSpec* teacher) {
  require_shape(n >= 1, "dataset needs at least one sample");
  Rng rng(seed);
  Dataset ds;
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.X(i, j) = rng.gaussian();
  if (gen == DatasetGenerator::teacher) {
    require_shape(teacher != nullptr, "teacher dataset needs a teacher spec");
    require_shape(teacher->model.input_dim() == d, "teacher input dim mismatch");
    for (int i = 0; i < n; ++i) {
      ds.y(i) = teacher->model.forward(teacher->theta, ds.X.row(i).transpose());
    }
    ds.provenance.teacher_desc = "teacher";
  } else {
    for (int i = 0; i < n; ++i) ds.y(i) = rng.gaussian();
  }
  ds.provenance.seed = seed;
  ds.provenance.generator = gen;
  return ds;
}

// -------------------------------------------------------------------- loss

double LossFn::eval(double s, double y) const {
  switch (kind) {
    case LossKind::square: return 0.5 * (s - y) * (s - y);
    case LossKind::linear: return -s;
    case LossKind::logistic: {
      const double sp = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
      return sp - y * s;
    }
  }
  return 0.0;
}

double LossFn::dloss(double s, double y) const {
  switch (kind) {
    case LossKind::square: return s - y;
    case LossKind::linear: return -1.0;
    case LossKind::logistic: {
      const double sig = s >= 0.0 ? 1.0 / (1.0 + std::exp(-s))
                                  : std::exp(s) / (1.0 + std::exp(s));
      return sig - y;
    }
  }
  return 0.0;
}

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::square: return "square";
    case LossKind::linear: return "linear";
    default: return "logistic";
  }
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "square") return LossKind::square;
  if (s == "linear") return LossKind::linear;
  if (s == "logistic") return LossKind::logistic;
  throw ConfigError("unknown loss kind: " + s);
}

std::pair<double, Vec> loss_and_grad(const Model& model, const Vec& theta,
                                     const Dataset& data, const LossFn& loss) {
  require_shape(data.X.cols() == model.input_dim(), "dataset dim mismatch");
  double total = 0.0;
  Vec grad = Vec::Zero(model.param_count());
  for (int i = 0; i < data.size(); ++i) {
    const Vec x = data.X.row(i).transpose();
    const double s = model.forward(theta, x);
    total += loss.eval(s, data.y(i));
    grad += loss.dloss(s, data.y(i)) * model.grad_theta(theta, x);
  }
  if (!std::isfinite(total) || !grad.allFinite()) {
    throw NumericError("non-finite loss or loss gradient");
  }
  return {total, grad};
}

// -------------------------------------------------------------- integration

double FlowTrajectory::channel_max(const std::string& name) const {
  for (const auto& [n, values] : monitor_channels) {
    if (n == name) {
      double worst = 0.0;
      for (double v : values) worst = std::max(worst, v);
      return worst;
    }
  }
  throw ConfigError("unknown trajectory channel: " + name);
}

namespace {

// One classical RK4 step of d theta / dt = f(theta).
template <typename F>
Vec rk4_step(const F& f, const Vec& theta, double dt) {
  const Vec k1 = f(theta);
  const Vec k2 = f(theta + 0.5 * dt * k1);
  const Vec k3 = f(theta + 0.5 * dt * k2);
  const Vec k4 = f(theta + dt * k3);
  return theta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<std::string> channel_names(const Model& model, const FlowConfig& cfg) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < cfg.monitors.size(); ++k) {
    names.push_back("monitor" + std::to_string(k) + "_" + kind_name(cfg.monitors[k]));
  }
  for (int c : cfg.track_coords) {
    require_shape(c >= 0 && c < model.param_count(), "tracked coordinate out of range");
    names.push_back("track_theta_" + std::to_string(c));
  }
  return names;
}

}  // namespace

FlowTrajectory integrate(const Model& model, const Vec& theta0, const Dataset& data,
                         const LossFn& loss, const FlowConfig& cfg) {
  require_shape(cfg.T > 0.0 && cfg.dt > 0.0, "T and dt must be positive");
  const bool has_shape = model.kind() != ModelKind::linear;
  const ParamShape shape =
      has_shape ? ParamShape::of(model) : ParamShape::two_layer(1, 1);
  for (const auto& sim : cfg.monitors) {
    require_shape(has_shape || std::holds_alternative<FullSpace>(sim),
                  "monitors need a network model");
  }

  FlowTrajectory traj;
  traj.model_kind = model.kind();
  if (model.kind() == ModelKind::two_layer) {
    traj.m = model.width();
    traj.d = model.input_dim();
  }
  const std::vector<std::string> names = channel_names(model, cfg);
  for (const auto& n : names) traj.monitor_channels.push_back({n, {}});

  auto field = [&](const Vec& th) -> Vec {
    return -loss_and_grad(model, th, data, loss).second;
  };

  Vec theta = theta0;
  double t = 0.0;
  auto snapshot = [&](double time, const Vec& th) {
    traj.times.push_back(time);
    traj.thetas.push_back(th);
    // Near blow-up the loss itself may overflow; record it as infinite.
    double value;
    try {
      value = loss_and_grad(model, th, data, loss).first;
      if (!std::isfinite(value)) value = std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
      value = std::numeric_limits<double>::infinity();
    }
    traj.loss_values.push_back(value);
    std::size_t c = 0;
    for (std::size_t k = 0; k < cfg.monitors.size(); ++k, ++c) {
      traj.monitor_channels[c].second.push_back(distance(cfg.monitors[k], shape, th));
    }
    for (int coordinate : cfg.track_coords) {
      traj.monitor_channels[c++].second.push_back(
          std::abs(th(coordinate) - theta0(coordinate)));
    }
  };
  snapshot(0.0, theta);

  const int n_steps = static_cast<int>(std::ceil(cfg.T / cfg.dt - 1e-12));

  if (!theta.allFinite()) throw NumericError("non-finite initial state");

  // A step that overflows the field marks the edge of the maximal interval
  // of existence; the trajectory truncates at the last good snapshot.
  auto step_or_truncate = [&](double dt, Vec& out) -> bool {
    try {
      out = rk4_step(field, theta, dt);
    } catch (const NumericError&) {
      return false;
    }
    return out.allFinite();
  };

  if (cfg.scheme == Scheme::rk4) {
    for (int step = 0; step < n_steps; ++step) {
      const double dt = std::min(cfg.dt, cfg.T - t);
      Vec next;
      if (!step_or_truncate(dt, next)) {
        snapshot(t, theta);
        traj.status = FlowStatus::blew_up;
        return traj;
      }
      theta = std::move(next);
      t += dt;
      const bool last = step == n_steps - 1;
      if (inf_norm(theta) > cfg.blowup_norm) {
        snapshot(t, theta);
        traj.status = FlowStatus::blew_up;
        return traj;
      }
      if ((step + 1) % cfg.snapshot_stride == 0 || last) snapshot(t, theta);
    }
    traj.status = FlowStatus::completed;
    return traj;
  }

  // Step-doubling RK4 with absolute error control.
  double dt = cfg.dt;
  const double dt_min = cfg.dt * 1e-6;
  int accepted = 0;
  while (t < cfg.T - 1e-12) {
    dt = std::min(dt, cfg.T - t);
    Vec full, mid, half;
    if (!step_or_truncate(dt, full)) {
      snapshot(t, theta);
      traj.status = FlowStatus::blew_up;
      return traj;
    }
    bool half_ok = true;
    try {
      mid = rk4_step(field, theta, 0.5 * dt);
      half = rk4_step(field, mid, 0.5 * dt);
      half_ok = half.allFinite();
    } catch (const NumericError&) {
      half_ok = false;
    }
    if (!half_ok) {
      snapshot(t, theta);
      traj.status = FlowStatus::blew_up;
      return traj;
    }
    const double err = inf_norm(full - half) / 15.0;
    if (err <= cfg.adaptive_tol || dt <= dt_min) {
      theta = half;
      t += dt;
      ++accepted;
      if (dt <= dt_min && err > cfg.adaptive_tol) traj.status = FlowStatus::ambiguous;
      if (inf_norm(theta) > cfg.blowup_norm) {
        snapshot(t, theta);
        traj.status = FlowStatus::blew_up;
        return traj;
      }
      if (accepted % cfg.snapshot_stride == 0 || t >= cfg.T - 1e-12) snapshot(t, theta);
    }
    const double scale =
        err > 0.0 ? 0.9 * std::pow(cfg.adaptive_tol / err, 0.2) : 5.0;
    dt *= std::clamp(scale, 0.2, 5.0);
  }
  if (traj.status != FlowStatus::ambiguous) traj.status = FlowStatus::completed;
  return traj;
}

// ------------------------------------------------------------------- probes

ProbeReport invariance_probe(const Model& model, const SimDescriptor& sim,
                             const Vec& theta0, const ProbeConfig& cfg) {
  const ParamShape shape = ParamShape::of(model);
  const double d0 = distance(sim, shape, theta0);
  if (d0 != 0.0) {
    throw std::invalid_argument(
        "theta0 must lie on the descriptor (distance " + std::to_string(d0) +
        "); project first");
  }
  require_shape(!cfg.losses.empty(), "probe needs at least one loss");

  ProbeReport report;
  for (int trial = 0; trial < cfg.n_trials; ++trial) {
    const std::uint64_t ts = derive_seed(cfg.seed, static_cast<std::uint64_t>(trial));
    const LossKind lk = cfg.losses[trial % cfg.losses.size()];
    Dataset data = make_dataset(cfg.n_data, model.input_dim(), cfg.generator, ts,
                                cfg.teacher ? &*cfg.teacher : nullptr);
    FlowConfig fc;
    fc.T = cfg.T;
    fc.dt = cfg.dt;
    fc.snapshot_stride = cfg.snapshot_stride;
    fc.monitors = {sim};
    fc.blowup_norm = cfg.blowup_norm;
    FlowTrajectory traj = integrate(model, theta0, data, LossFn{lk}, fc);

    ProbeTrialResult tr;
    tr.trial = trial;
    tr.seed = ts;
    tr.loss = lk;
    tr.status = traj.status;
    tr.max_drift = traj.channel_max(traj.monitor_channels.front().first);
    report.per_trial.push_back(tr);
    if (!(cfg.exclude_blowups && tr.status == FlowStatus::blew_up)) {
      report.max_drift = std::max(report.max_drift, tr.max_drift);
    }
    if (cfg.stop_at_first_escape && report.max_drift > cfg.escape_level) break;
  }
  return report;
}

CondensationChannels condensation_metrics(const FlowTrajectory& traj, double tol_angle) {
  require_shape(traj.model_kind == ModelKind::two_layer,
                "condensation metrics apply to two-layer trajectories");
  const int m = traj.m;
  const int d = traj.d;
  CondensationChannels out;
  for (const Vec& theta : traj.thetas) {
    const TwoLayerParams p = TwoLayerParams::unflatten(theta, m, d);
    std::vector<Vec> dirs(m);
    std::vector<bool> zero(m, false);
    for (int i = 0; i < m; ++i) {
      const Vec w = p.W.row(i).transpose();
      const double n = w.norm();
      if (n <= 1e-12) {
        zero[i] = true;
        dirs[i] = Vec::Zero(d);
      } else {
        dirs[i] = w / n;
      }
    }
    // Cluster by |cos| within tol_angle; zero-norm neurons stay singletons.
    std::vector<int> parent(m);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    double max_align = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        if (zero[i] || zero[j]) continue;
        const double c = std::abs(dirs[i].dot(dirs[j]));
        max_align = std::max(max_align, std::min(c, 1.0));
        if (1.0 - c <= tol_angle) parent[find(i)] = find(j);
      }
    }
    int clusters = 0;
    for (int i = 0; i < m; ++i) {
      if (find(i) == i) ++clusters;
    }
    out.effective_neurons.push_back(static_cast<double>(clusters));
    out.max_pair_alignment.push_back(max_align);
  }
  return out;
}

PerturbationReport perturbation_probe(const Model& model, const Vec& theta_star,
                                      const SimDescriptor& constraint,
                                      const PerturbationConfig& cfg) {
  const ParamShape shape = ParamShape::of(model);
  const double d0 = distance(constraint, shape, theta_star);
  require_shape(d0 == 0.0, "theta_star must satisfy the constraint at t = 0");

  Rng rng(cfg.seed);
  PerturbationReport report;
  const int n_steps = static_cast<int>(std::ceil(cfg.T / cfg.dt - 1e-12));
  for (int k = 0; k < cfg.n_anchors; ++k) {
    Vec x(model.input_dim());
    for (int i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
    // The linear loss at a single sample turns the flow into the pure
    // induced field grad F(.)(x); run it in both time directions.
    for (const double sgn : {1.0, -1.0}) {
      auto field = [&](const Vec& th) -> Vec { return sgn * model.grad_theta(th, x); };
      Vec theta = theta_star;
      for (int step = 0; step < n_steps; ++step) {
        theta = rk4_step(field, theta, cfg.dt);
        if (!theta.allFinite()) {
          throw NumericError("non-finite state in perturbation probe");
        }
        report.max_constraint_motion = std::max(
            report.max_constraint_motion, distance(constraint, shape, theta));
        if (report.max_constraint_motion > cfg.escape_tol) {
          report.escaped = true;
          return report;
        }
        if (inf_norm(theta) > cfg.blowup_norm) break;
      }
    }
  }
  report.escaped = report.max_constraint_motion > cfg.escape_tol;
  return report;
}

void write_trajectory_csv(std::ostream& os, const FlowTrajectory& traj) {
  const int M = traj.thetas.empty() ? 0 : static_cast<int>(traj.thetas.front().size());
  os << "t,loss";
  for (int k = 0; k < M; ++k) os << ",theta_" << k;
  for (const auto& [name, values] : traj.monitor_channels) os << "," << name;
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (int s = 0; s < traj.snapshot_count(); ++s) {
    put(traj.times[s]);
    os << ",";
    put(traj.loss_values[s]);
    for (int k = 0; k < M; ++k) {
      os << ",";
      put(traj.thetas[s](k));
    }
    for (const auto& [name, values] : traj.monitor_channels) {
      os << ",";
      put(values[s]);
    }
    os << "\n";
  }
}

}  // namespace simlab
