#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "simlab/flow.hpp"
#include "simlab/liegeom.hpp"
#include "simlab/model.hpp"
#include "simlab/symmetry.hpp"

namespace simlab {

enum class DegeneracyKind { zero_a, zero_w, tied_w_plus, tied_w_minus };

struct DegeneracyViolation {
  DegeneracyKind kind;
  std::vector<int> indices;  // 0-based neurons
};

struct DegeneracyReport {
  bool non_degenerate = true;
  std::vector<DegeneracyViolation> violations;
};

/// Flags |a_k| <= tol, ||w_k||_inf <= tol, ||w_i - w_j||_inf <= tol and
/// ||w_i + w_j||_inf <= tol (i < j).
DegeneracyReport degeneracy_report(const TwoLayerParams& p, double tol);

const char* to_string(DegeneracyKind k);
nlohmann::json degeneracy_to_json(const DegeneracyReport& r);

struct GramConfig {
  int n_samples = 200;
  std::uint64_t seed = 0;
  double rank_tol = 1e-8;
};

struct GramReport {
  int rank = 0;
  std::vector<double> singular_values;
  double gap_ratio = 0.0;
  double rank_tol = 0.0;
  int n_samples = 0;
};

/// Rank of the n_samples x (d+1)m design matrix of the neuron functions
/// { sigma(w_i . x), sigma'(w_i . x) x_1, ..., sigma'(w_i . x) x_d } at
/// Gaussian samples.
GramReport gram_independence(const ActivationDescriptor& act, const Mat& W,
                             const GramConfig& cfg);

// ---------------------------------------------------------------------------

enum class CheckBound { at_most, at_least, equals };

struct CheckItem {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  CheckBound bound = CheckBound::at_most;
  bool passed = false;
  std::string note;
};

/// Outcome of one scenario: passed iff every measured value satisfies its
/// threshold. Bit-exactly reproducible from (name, cfg, seed).
struct ScenarioResult {
  std::string name;
  bool passed = false;
  std::vector<CheckItem> checks;

  void add(std::string check_name, double measured, double threshold,
           CheckBound bound, std::string note = "");
  void finalize();
};

nlohmann::json scenario_to_json(const ScenarioResult& r);

struct SuiteConfig {
  std::uint64_t seed = 0;
  int m = 2;
  int d = 1;
  std::vector<int> widths;   // deep suites; empty = {d, 2, 2, 1}
  std::string activation;    // empty = per-suite default
  int n_trials = 20;
  double T = 5.0;
  double dt = 1e-3;
  double drift_tol = 1e-6;
  double escape_level = 1e-2;
  double separation_tol = 1e-6;
  int separation_flows = 50;
};

/// Checks that a linearly independent basis yields full span rank at random
/// parameters and exactly vanishing brackets.
ScenarioResult linear_baseline_check(const LinearBasis& basis, const SuiteConfig& cfg);

/// Scenario runners tying the modules together:
///  - orbit_leaf_match: every enumerated leaf has span rank equal to its
///    dimension, with a confident spectral gap.
///  - all_sims_symmetry_induced: leaf ranks plus invariance probes on every
///    leaf and separation checks across distinct equal-dimension leaves.
///  - deep_symmetry: invariance probes for zero-pattern, row-zero, and
///    fixed-point-set constraints under their activation hypotheses.
///  - invariant_map_gate: certifies that the fixed-point line {theta_2 = 0}
///    of the shear map on F(theta)(x) = (theta_1 - theta_2) x is NOT
///    flow-invariant.
ScenarioResult theorem_suite(const std::string& name, const SuiteConfig& cfg);

std::vector<std::string> theorem_suite_names();

}  // namespace simlab
