#pragma once

#include <string>
#include <vector>

#include "simlab/activation.hpp"
#include "simlab/common.hpp"

namespace simlab {

/// Bias-free two-layer network parameters:
/// F(theta)(x) = sum_i a_i sigma(w_i . x).
/// The flat layout groups each neuron as (a_i, w_i), so M = (d+1) m.
struct TwoLayerParams {
  int m = 0;
  int d = 0;
  Vec a;  // size m
  Mat W;  // m x d, row i holds w_i

  int param_count() const { return (d + 1) * m; }
  Vec flatten() const;
  static TwoLayerParams unflatten(const Vec& theta, int m, int d);

  /// Neuron i as the (d+1)-vector (a_i, w_i).
  Vec neuron(int i) const;
  void set_neuron(int i, const Vec& u);
};

/// Fully-connected network parameters with biases. widths = n_0..n_L and
/// n_L = 1. The flat layout is per layer, W row-major then b.
struct DeepParams {
  std::vector<int> widths;
  std::vector<Mat> W;  // W[l] has shape widths[l+1] x widths[l]
  std::vector<Vec> b;  // b[l] has size widths[l+1]

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  int param_count() const;
  Vec flatten() const;
  static DeepParams unflatten(const Vec& theta, const std::vector<int>& widths);
  static DeepParams zeros(const std::vector<int>& widths);

  /// Flat index of W[l](i, j) / b[l](i), with l being the 0-based layer.
  int flat_index_W(int l, int i, int j) const;
  int flat_index_b(int l, int i) const;
};

/// One scalar feature of a linear-in-parameters model.
struct BasisFn {
  std::string name;
  std::function<double(const Vec&)> fn;
};

struct LinearBasis {
  std::string kind;  // "monomial" | "fourier" | "custom"
  int degree = 0;    // monomial only
  int d = 0;
  std::vector<BasisFn> fns;

  /// All monomials on R^d of total degree <= degree.
  static LinearBasis monomial(int d, int degree);
  /// {1, sin x, cos x} on R^1.
  static LinearBasis fourier1d();
  static LinearBasis custom(int d, std::vector<BasisFn> fns);

  int size() const { return static_cast<int>(fns.size()); }
  Vec eval(const Vec& x) const;
};

enum class ModelKind { two_layer, mlp, linear };

/// An analytic parametric model theta -> (x -> F(theta)(x)) supplying exact
/// forward values, parameter gradients, and Hessian-vector products. All
/// operations are pure; instances are immutable after construction and safe
/// to share across threads.
class Model {
 public:
  static Model two_layer(ActivationDescriptor act, int m, int d);
  /// widths = n_0..n_L with n_L = 1. By default sigma is applied at every
  /// layer including the last; linear_readout switches the last layer to an
  /// identity readout.
  static Model mlp(ActivationDescriptor act, std::vector<int> widths,
                   bool linear_readout = false);
  static Model linear(LinearBasis basis);

  ModelKind kind() const { return kind_; }
  int param_count() const { return param_count_; }
  int input_dim() const { return input_dim_; }
  const ActivationDescriptor& act() const { return act_; }
  int width() const { return m_; }                       // two_layer
  const std::vector<int>& widths() const { return widths_; }  // mlp
  bool linear_readout() const { return linear_readout_; }
  const LinearBasis& basis() const { return basis_; }

  double forward(const Vec& theta, const Vec& x) const;
  Vec grad_theta(const Vec& theta, const Vec& x) const;
  /// (Hessian_theta F(theta)(x)) v. Closed form for two-layer and linear
  /// models; central differences of grad_theta for mlp.
  Vec hess_theta_vec(const Vec& theta, const Vec& x, const Vec& v) const;

  TwoLayerParams as_two_layer(const Vec& theta) const;
  DeepParams as_deep(const Vec& theta) const;

 private:
  Model() = default;
  void check_theta(const Vec& theta) const;
  void check_x(const Vec& x) const;

  ModelKind kind_ = ModelKind::two_layer;
  ActivationDescriptor act_;
  int m_ = 0;
  int input_dim_ = 0;
  int param_count_ = 0;
  std::vector<int> widths_;
  bool linear_readout_ = false;
  LinearBasis basis_;
};

}  // namespace simlab
