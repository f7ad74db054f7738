#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "simlab/model.hpp"
#include "simlab/symmetry.hpp"

namespace simlab {

enum class DatasetGenerator { gaussian_iid, teacher };

struct TeacherSpec {
  Model model;
  Vec theta;
};

struct Dataset {
  Mat X;  // n x d
  Vec y;  // n
  struct Provenance {
    std::uint64_t seed = 0;
    DatasetGenerator generator = DatasetGenerator::gaussian_iid;
    std::string teacher_desc;
  } provenance;

  int size() const { return static_cast<int>(X.rows()); }
};

/// X rows are i.i.d. standard normal; y is standard normal for gaussian_iid
/// and the teacher's outputs for teacher.
Dataset make_dataset(int n, int d, DatasetGenerator gen, std::uint64_t seed,
                     const TeacherSpec* teacher = nullptr);

enum class LossKind { square, linear, logistic };

/// Pointwise loss l(s, y) with its derivative in the first argument.
/// square: 0.5 (s-y)^2. linear: -s (its flow follows a single induced field).
/// logistic: log(1+e^s) - y s.
struct LossFn {
  LossKind kind = LossKind::square;
  double eval(double s, double y) const;
  double dloss(double s, double y) const;
};

const char* to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

/// (L(theta), grad L(theta)) summed in dataset order.
std::pair<double, Vec> loss_and_grad(const Model& model, const Vec& theta,
                                     const Dataset& data, const LossFn& loss);

enum class FlowStatus { completed, blew_up, ambiguous };
enum class Scheme { rk4, rk4_adaptive };

struct FlowConfig {
  double T = 5.0;
  double dt = 1e-3;
  Scheme scheme = Scheme::rk4;
  int snapshot_stride = 10;
  std::vector<SimDescriptor> monitors;
  std::vector<int> track_coords;  // flat indices whose |theta_k(t)-theta_k(0)| is recorded
  double blowup_norm = 1e6;
  double adaptive_tol = 1e-9;
};

struct FlowTrajectory {
  std::vector<double> times;
  std::vector<Vec> thetas;
  std::vector<double> loss_values;
  // Channel name -> one value per snapshot, in declaration order.
  std::vector<std::pair<std::string, std::vector<double>>> monitor_channels;
  FlowStatus status = FlowStatus::completed;
  // Two-layer metadata for condensation metrics and CSV headers.
  ModelKind model_kind = ModelKind::two_layer;
  int m = 0, d = 0;

  int snapshot_count() const { return static_cast<int>(times.size()); }
  double channel_max(const std::string& name) const;
};

/// Integrates d theta / dt = -grad L(theta) from theta0, recording loss and
/// per-monitor distances at every snapshot_stride-th step (plus start and
/// end). Stops with status blew_up once ||theta||_inf exceeds blowup_norm.
/// A non-finite state raises NumericError.
FlowTrajectory integrate(const Model& model, const Vec& theta0, const Dataset& data,
                         const LossFn& loss, const FlowConfig& cfg);

struct ProbeTrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::square;
  FlowStatus status = FlowStatus::completed;
  double max_drift = 0.0;
};

struct ProbeReport {
  double max_drift = 0.0;
  std::vector<ProbeTrialResult> per_trial;
};

struct ProbeConfig {
  int n_trials = 20;
  int n_data = 25;
  DatasetGenerator generator = DatasetGenerator::gaussian_iid;
  std::optional<TeacherSpec> teacher;
  std::vector<LossKind> losses = {LossKind::square};
  double T = 5.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  int snapshot_stride = 10;
  double blowup_norm = 1e6;
  // Blown-up trials always appear in per_trial; they enter max_drift unless
  // this flag excludes them.
  bool exclude_blowups = false;
  bool stop_at_first_escape = false;  // for counterexample searches
  double escape_level = 1e-2;
};

/// Max over trials and time of distance(sim, theta(t)) across independent
/// (dataset, loss) draws. theta0 must lie on the descriptor (distance 0).
ProbeReport invariance_probe(const Model& model, const SimDescriptor& sim,
                             const Vec& theta0, const ProbeConfig& cfg);

struct CondensationChannels {
  std::vector<double> effective_neurons;
  std::vector<double> max_pair_alignment;
};

/// Per snapshot: the number of direction clusters of the unit-normalized
/// inner weights at cosine tolerance tol_angle (zero-norm neurons each form
/// their own cluster), and max_{i != j} |cos(w_i, w_j)|.
CondensationChannels condensation_metrics(const FlowTrajectory& traj, double tol_angle);

struct PerturbationConfig {
  int n_anchors = 40;
  double T = 0.5;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  double escape_tol = 1e-6;
  double blowup_norm = 1e6;
};

struct PerturbationReport {
  bool escaped = false;
  double max_constraint_motion = 0.0;
};

/// Runs single-sample linear-loss flows (pure induced fields, both time
/// directions) from theta_star over n_anchors Gaussian anchors and short
/// horizons; escaped is true when the constraint distance ever exceeds
/// escape_tol. Certifies escape exactly; confinement only up to the sampled
/// family of flows.
PerturbationReport perturbation_probe(const Model& model, const Vec& theta_star,
                                      const SimDescriptor& constraint,
                                      const PerturbationConfig& cfg);

/// CSV columns: t, loss, theta_0..theta_{M-1}, then one column per channel.
void write_trajectory_csv(std::ostream& os, const FlowTrajectory& traj);

}  // namespace simlab
