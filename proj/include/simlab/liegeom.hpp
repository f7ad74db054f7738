#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "simlab/model.hpp"
#include "simlab/symmetry.hpp"

namespace simlab {

/// A syntax tree over the induced vector fields of a model. A Base node is
/// the parameter-space field theta -> grad_theta F(theta)(x) anchored at one
/// input x; a Bracket node is the commutator of its children, evaluated as
/// [X, Y](theta) = (DX)(theta) Y(theta) - (DY)(theta) X(theta).
class FieldExpr {
 public:
  static FieldExpr base(Vec anchor);
  static FieldExpr bracket(FieldExpr left, FieldExpr right);

  bool is_base() const { return node_->left == nullptr; }
  int depth() const { return node_->depth; }
  const Vec& anchor() const;
  FieldExpr left() const;   // shares ownership of the immutable subtree
  FieldExpr right() const;
  std::string describe() const;

 private:
  struct Node {
    Vec anchor;
    std::shared_ptr<const Node> left, right;
    int depth = 0;
  };
  explicit FieldExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static FieldExpr wrap(std::shared_ptr<const Node> n) { return FieldExpr(std::move(n)); }
  std::shared_ptr<const Node> node_;
};

/// Value of the field expression at theta. Base nodes use the model's exact
/// gradient; Bracket nodes use Hessian-vector products for Base children and
/// directional finite differences for nested Bracket children. Non-finite
/// results raise NumericError naming the offending sub-expression.
Vec eval_field(const Model& model, const FieldExpr& expr, const Vec& theta);

/// Directional derivative (D expr)(theta) u of the field expression.
Vec field_jacobian_vec(const Model& model, const FieldExpr& expr, const Vec& theta,
                       const Vec& u);

struct LieSpanConfig {
  int n_anchors = 0;        // 0: auto (4 M)
  int bracket_depth = -1;   // -1: auto (0 for two-layer/linear, 1 for mlp)
  double rank_tol = 1e-8;   // relative to sigma_max
  std::uint64_t seed = 0;
  int max_fields = 512;        // hard budget; exceeding it is an error
  int bracket_candidates = 8;  // base fields eligible for bracketing
};

struct LieSpanReport {
  int rank = 0;
  std::vector<double> singular_values;  // descending, full spectrum
  double gap_ratio = 0.0;               // sigma_rank / sigma_{rank+1}, +inf if exact
  int n_fields = 0;
  int bracket_depth = 0;
  double rank_tol = 0.0;
  bool confident = false;  // gap_ratio >= 1e4 or rank == min(n_fields, M)
};

/// Estimates dim Lie_theta(F) by stacking sampled field evaluations at theta
/// (standard-normal anchors, brackets up to bracket_depth) and thresholding
/// the singular spectrum. Deterministic given cfg and seed; matrix rows are
/// ordered by field enumeration order.
LieSpanReport lie_span_rank(const Model& model, const Vec& theta,
                            const LieSpanConfig& cfg);

/// Dimension of the invariant-partition leaf described by `partition`:
/// (d+1) * #blocks in equality mode, (d+1) * #nonzero blocks in sign mode.
int predicted_leaf_dim(const NeuronPartition& partition, int d, PartitionMode mode);

}  // namespace simlab
