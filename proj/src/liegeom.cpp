#include "simlab/liegeom.hpp"

#include <sstream>

#include "simlab/numerics.hpp"
#include "simlab/rng.hpp"

namespace simlab {

// ---------------------------------------------------------------- FieldExpr

FieldExpr FieldExpr::base(Vec anchor) {
  auto n = std::make_shared<Node>();
  n->anchor = std::move(anchor);
  n->depth = 0;
  return wrap(std::move(n));
}

FieldExpr FieldExpr::bracket(FieldExpr left, FieldExpr right) {
  auto n = std::make_shared<Node>();
  n->left = left.node_;
  n->right = right.node_;
  n->depth = 1 + std::max(left.depth(), right.depth());
  return wrap(std::move(n));
}

const Vec& FieldExpr::anchor() const {
  require_shape(is_base(), "anchor() on a bracket node");
  return node_->anchor;
}

FieldExpr FieldExpr::left() const {
  require_shape(!is_base(), "left() on a base node");
  return wrap(node_->left);
}

FieldExpr FieldExpr::right() const {
  require_shape(!is_base(), "right() on a base node");
  return wrap(node_->right);
}

std::string FieldExpr::describe() const {
  if (is_base()) {
    std::ostringstream os;
    os << "B(";
    for (int i = 0; i < node_->anchor.size(); ++i) {
      if (i) os << ",";
      os << node_->anchor(i);
    }
    os << ")";
    return os.str();
  }
  return "[" + wrap(node_->left).describe() + "," + wrap(node_->right).describe() + "]";
}

// -------------------------------------------------------------- evaluation

Vec eval_field(const Model& model, const FieldExpr& expr, const Vec& theta) {
  Vec value;
  if (expr.is_base()) {
    value = model.grad_theta(theta, expr.anchor());
  } else {
    const FieldExpr lhs = expr.left();
    const FieldExpr rhs = expr.right();
    const Vec yl = eval_field(model, lhs, theta);
    const Vec yr = eval_field(model, rhs, theta);
    value = field_jacobian_vec(model, lhs, theta, yr) -
            field_jacobian_vec(model, rhs, theta, yl);
  }
  if (!value.allFinite()) {
    throw NumericError("non-finite field value at " + expr.describe());
  }
  return value;
}

Vec field_jacobian_vec(const Model& model, const FieldExpr& expr, const Vec& theta,
                       const Vec& u) {
  if (expr.is_base()) {
    return model.hess_theta_vec(theta, expr.anchor(), u);
  }
  const double un = inf_norm(u);
  if (un == 0.0) return Vec::Zero(theta.size());
  const double h = fd_step(inf_norm(theta), un);
  return (eval_field(model, expr, theta + h * u) -
          eval_field(model, expr, theta - h * u)) /
         (2.0 * h);
}

// ------------------------------------------------------------ span and rank

LieSpanReport lie_span_rank(const Model& model, const Vec& theta,
                            const LieSpanConfig& cfg) {
  const int M = model.param_count();
  require_shape(theta.size() == M, "theta does not match model");
  if (cfg.rank_tol <= 0.0) throw ConfigError("rank_tol must be positive");

  const int n_anchors = cfg.n_anchors > 0 ? cfg.n_anchors : 4 * M;
  int depth = cfg.bracket_depth;
  if (depth < 0) depth = model.kind() == ModelKind::mlp ? 1 : 0;

  Rng rng(cfg.seed);
  std::vector<FieldExpr> fields;
  fields.reserve(n_anchors);
  for (int k = 0; k < n_anchors; ++k) {
    Vec x(model.input_dim());
    for (int i = 0; i < x.size(); ++i) x(i) = rng.gaussian();
    fields.push_back(FieldExpr::base(std::move(x)));
  }
  if (static_cast<int>(fields.size()) > cfg.max_fields) {
    throw BudgetError("field budget exceeded by base anchors");
  }

  // Bracket expansion: level 1 takes unordered pairs over the first
  // bracket_candidates base fields; deeper levels bracket those base
  // candidates against every field of the previous level.
  const int cand = std::min(cfg.bracket_candidates, n_anchors);
  std::vector<FieldExpr> prev(fields.begin(), fields.begin() + cand);
  for (int level = 1; level <= depth; ++level) {
    std::vector<FieldExpr> next;
    if (level == 1) {
      for (int i = 0; i < cand; ++i)
        for (int j = i + 1; j < cand; ++j)
          next.push_back(FieldExpr::bracket(fields[i], fields[j]));
    } else {
      for (int i = 0; i < cand; ++i)
        for (const auto& f : prev) next.push_back(FieldExpr::bracket(fields[i], f));
    }
    if (static_cast<int>(fields.size() + next.size()) > cfg.max_fields) {
      throw BudgetError("field budget exceeded at bracket depth " +
                        std::to_string(level));
    }
    fields.insert(fields.end(), next.begin(), next.end());
    prev = std::move(next);
  }

  Mat rows(static_cast<int>(fields.size()), M);
  for (std::size_t k = 0; k < fields.size(); ++k) {
    rows.row(k) = eval_field(model, fields[k], theta).transpose();
  }

  SpectralRank sr = svd_rank(rows, cfg.rank_tol);
  LieSpanReport report;
  report.rank = sr.rank;
  report.singular_values = std::move(sr.singular_values);
  report.gap_ratio = sr.gap_ratio;
  report.n_fields = static_cast<int>(fields.size());
  report.bracket_depth = depth;
  report.rank_tol = cfg.rank_tol;
  report.confident =
      report.gap_ratio >= 1e4 || report.rank == std::min(report.n_fields, M);
  return report;
}

int predicted_leaf_dim(const NeuronPartition& partition, int d, PartitionMode mode) {
  require_shape(partition.mode == mode, "partition mode mismatch");
  return (d + 1) * static_cast<int>(partition.blocks.size());
}

}  // namespace simlab
