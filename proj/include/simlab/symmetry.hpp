#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "simlab/model.hpp"

namespace simlab {

/// Parameter-vector shape as seen by group actions: a bias-free two-layer
/// network (one hidden layer of m neurons) or a deep network with biases.
struct ParamShape {
  ModelKind kind = ModelKind::two_layer;
  int m = 0;
  int d = 0;
  std::vector<int> widths;  // mlp only

  static ParamShape of(const Model& model);
  static ParamShape two_layer(int m, int d);
  static ParamShape deep(std::vector<int> widths);

  int param_count() const;
  int layer_count() const;  // L
  int hidden_width(int l) const;  // n_l for l in 1..L-1
};

// Group elements of the parameter-space symmetry groups of fully-connected
// networks. Permutations are stored as source maps (out[i] = in[perm[i]],
// i.e. perm[i] = pi^{-1}(i)); sign vectors hold +-1 entries.

/// Per-hidden-layer permutations: W^(l) -> P^(l) W^(l) P^(l-1)^T, b -> P^(l) b.
struct PermElement {
  std::vector<std::vector<int>> perm;  // one entry per hidden layer 1..L-1
};

/// Per-hidden-layer sign flips: W^(l) -> L^(l) W^(l) L^(l-1), b -> L^(l) b.
struct SignElement {
  std::vector<std::vector<int>> lambda;
};

/// Row sign flips on every layer 1..L: W^(l) -> L^(l) W^(l), b -> L^(l) b.
struct SignPrimeElement {
  std::vector<std::vector<int>> lambda;
};

/// Signed permutations per hidden layer, composing as
/// (L1, P1)(L2, P2) = (L1 P1 L2 P1^T, P1 P2).
struct CombinedElement {
  std::vector<std::vector<int>> lambda;
  std::vector<std::vector<int>> perm;
};

using GroupElement =
    std::variant<PermElement, SignElement, SignPrimeElement, CombinedElement>;

/// Every group action above is a signed permutation of the flat parameter
/// coordinates; this is its materialized form.
struct SignedPermutation {
  std::vector<int> source;  // out[i] = sign[i] * in[source[i]]
  std::vector<int> sign;

  Vec apply(const Vec& v) const;
  bool is_identity() const;
};

SignedPermutation flat_action(const GroupElement& g, const ParamShape& shape);

/// Applies the group action. The action is linear and orthogonal.
Vec apply(const GroupElement& g, const ParamShape& shape, const Vec& theta);
TwoLayerParams apply(const GroupElement& g, const TwoLayerParams& p);
DeepParams apply(const GroupElement& g, const DeepParams& p);

CombinedElement compose(const CombinedElement& g1, const CombinedElement& g2);

/// Identity permutation / all-ones convenience constructors.
std::vector<int> identity_perm(int n);
std::vector<int> ones_sign(int n);

// ---------------------------------------------------------------------------
// Invariant-partition leaves for two-layer networks.

enum class PartitionMode { equality, sign };

/// A leaf of the invariant partition of two-layer parameters. Equality mode
/// groups neurons with identical (a_i, w_i); sign mode groups neurons that
/// agree up to a global per-neuron sign gamma_i and keeps a separate block of
/// exactly-zero neurons. Indices are 0-based internally and 1-based in JSON.
struct NeuronPartition {
  PartitionMode mode = PartitionMode::equality;
  std::vector<std::vector<int>> blocks;  // nonzero blocks, sorted, leader-ordered
  std::vector<int> zero_block;           // sign mode only
  std::vector<int> gamma;                // sign mode, size m, leader of each block +1
  double tol = 0.0;

  int m() const;
  std::string canonical_key() const;
  bool same_leaf(const NeuronPartition& other) const;
};

/// The unique leaf containing theta at tolerance tol. Any pairwise distance
/// inside (tol, 2 tol) raises AmbiguityError rather than risking a
/// non-transitive merge. Sign mode requires an odd activation (caller-checked).
NeuronPartition classify_partition(const TwoLayerParams& p, PartitionMode mode,
                                   double tol);

/// Exact (tolerance-free) leaf membership, including cross-block distinctness.
bool leaf_contains(const NeuronPartition& leaf, const TwoLayerParams& p);

/// Order of the stabilizer subgroup shared by every point of the leaf:
/// equality mode prod_p |B_p|!; sign mode 2^{|Z|} |Z|! prod_p |B_p|! where Z
/// is the zero block (sign freedom and permutations on zero neurons, block
/// permutations elsewhere).
long long stabilizer_order(const NeuronPartition& partition);

/// All canonical leaves for width m (m <= 6). Equality mode: all set
/// partitions. Sign mode: all (zero block, partition, gamma) triples with
/// gamma canonicalized so each block leader carries +1.
std::vector<NeuronPartition> enumerate_leaves(int m, PartitionMode mode);

/// Exact member of a leaf with block representatives drawn from seed.
/// Representatives are redrawn until they are pairwise distinct (up to sign in
/// sign mode) and nonzero, so membership is exact.
TwoLayerParams construct_leaf_member(const NeuronPartition& leaf, int d,
                                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Declarative invariant-manifold constraints.

enum class TieRelation { equal, negated, even_mirror };

/// Neurons grouped per an equality-mode partition.
struct EqualityClass {
  NeuronPartition partition;
};
/// Neurons grouped per a sign-mode partition (zero block pinned at 0).
struct SignClass {
  NeuronPartition partition;
};
/// Two neurons tied: (a_i,w_i) = (a_j,w_j) / -(a_j,w_j) / (a_j,-w_j).
struct PairTie {
  int i = 0, j = 1;
  TieRelation relation = TieRelation::equal;
};
/// Whole neuron pinned at zero: (a_i, w_i) = 0.
struct NeuronZero {
  int i = 0;
};
/// Inner weights pinned at zero: w_i = 0.
struct WeightZero {
  int i = 0;
};
/// Outer weight pinned at zero: a_i = 0 (probe constraint).
struct OutputZero {
  int i = 0;
};
/// Inner weights tied: w_i = sign * w_j (probe constraint).
struct WeightTie {
  int i = 0, j = 1;
  int sign = 1;
};
/// Deep-net block sparsity pattern selected by hidden index sets I_1..I_{L-1}:
/// W^(l)_{ij} = 0 for (i,j) in I_l x I_{l-1}^c and I_l^c x I_{l-1}, b_i = 0
/// for i in I_l; entries indexed by I_l x I_{l-1} stay free.
struct ZeroPattern {
  std::vector<std::vector<int>> hidden;  // 0-based unit sets per hidden layer
};
/// One deep-net row pinned at zero: W^(l) row j and b^(l)_j (0-based layer).
struct RowZero {
  int layer = 0;
  int row = 0;
};
/// Joint fixed-point set of a list of group elements.
struct FixedPointSet {
  std::vector<GroupElement> elements;
};
struct FullSpace {};

using SimDescriptor =
    std::variant<EqualityClass, SignClass, PairTie, NeuronZero, WeightZero,
                 OutputZero, WeightTie, ZeroPattern, RowZero, FixedPointSet,
                 FullSpace>;

/// Distance to the constraint set in the max norm; 0 exactly on members.
double distance(const SimDescriptor& sim, const ParamShape& shape, const Vec& theta);

/// A point of the constraint set; members are returned unchanged. Block
/// constraints project to (gamma-weighted) block means; zero constraints zero
/// the pinned entries; fixed-point sets use exact signed-orbit averaging.
Vec project(const SimDescriptor& sim, const ParamShape& shape, const Vec& theta);

bool member(const SimDescriptor& sim, const ParamShape& shape, const Vec& theta,
            double tol);

/// Dimension of the constraint set as a manifold.
int manifold_dim(const SimDescriptor& sim, const ParamShape& shape);

std::string kind_name(const SimDescriptor& sim);

/// JSON schema: {"kind": "equality_class"|"sign_class"|"pair_tie"|
/// "neuron_zero"|"weight_zero"|"output_zero"|"weight_tie"|"zero_pattern"|
/// "row_zero"|"fixed_point_set"|"full_space", ...}. Index fields are 1-based.
nlohmann::json sim_to_json(const SimDescriptor& sim);
SimDescriptor sim_from_json(const nlohmann::json& j);

nlohmann::json partition_to_json(const NeuronPartition& p);
NeuronPartition partition_from_json(const nlohmann::json& j);

nlohmann::json group_element_to_json(const GroupElement& g);
GroupElement group_element_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

struct InvarianceCheckReport {
  double max_violation = 0.0;
  int n_samples = 0;
};

/// For a fixed point theta of g (checked to 1e-12), measures
/// max over sampled x of || g(grad F(theta)(x)) - grad F(theta)(x) ||_inf.
/// The actions are orthogonal involutions, so tangent invariance of the
/// gradient reduces to g-fixedness of the gradient vector.
InvarianceCheckReport check_infinitesimal_invariance(const Model& model,
                                                     const GroupElement& g,
                                                     const Vec& theta, int n_samples,
                                                     std::uint64_t seed);

}  // namespace simlab
