#include "simlab/model.hpp"

#include <cmath>
#include <numeric>

#include "simlab/numerics.hpp"

namespace simlab {

// ---------------------------------------------------------------- TwoLayer

Vec TwoLayerParams::flatten() const {
  Vec out(param_count());
  for (int i = 0; i < m; ++i) {
    out((d + 1) * i) = a(i);
    out.segment((d + 1) * i + 1, d) = W.row(i).transpose();
  }
  return out;
}

TwoLayerParams TwoLayerParams::unflatten(const Vec& theta, int m, int d) {
  require_shape(theta.size() == (d + 1) * m, "two-layer theta has wrong length");
  TwoLayerParams p;
  p.m = m;
  p.d = d;
  p.a.resize(m);
  p.W.resize(m, d);
  for (int i = 0; i < m; ++i) {
    p.a(i) = theta((d + 1) * i);
    p.W.row(i) = theta.segment((d + 1) * i + 1, d).transpose();
  }
  return p;
}

Vec TwoLayerParams::neuron(int i) const {
  Vec u(d + 1);
  u(0) = a(i);
  u.tail(d) = W.row(i).transpose();
  return u;
}

void TwoLayerParams::set_neuron(int i, const Vec& u) {
  a(i) = u(0);
  W.row(i) = u.tail(d).transpose();
}

// -------------------------------------------------------------------- Deep

int DeepParams::param_count() const {
  int n = 0;
  for (int l = 0; l < layer_count(); ++l) n += widths[l + 1] * (widths[l] + 1);
  return n;
}

Vec DeepParams::flatten() const {
  Vec out(param_count());
  int k = 0;
  for (int l = 0; l < layer_count(); ++l) {
    for (int i = 0; i < W[l].rows(); ++i)
      for (int j = 0; j < W[l].cols(); ++j) out(k++) = W[l](i, j);
    for (int i = 0; i < b[l].size(); ++i) out(k++) = b[l](i);
  }
  return out;
}

DeepParams DeepParams::unflatten(const Vec& theta, const std::vector<int>& widths) {
  DeepParams p = zeros(widths);
  require_shape(theta.size() == p.param_count(), "deep theta has wrong length");
  int k = 0;
  for (int l = 0; l < p.layer_count(); ++l) {
    for (int i = 0; i < p.W[l].rows(); ++i)
      for (int j = 0; j < p.W[l].cols(); ++j) p.W[l](i, j) = theta(k++);
    for (int i = 0; i < p.b[l].size(); ++i) p.b[l](i) = theta(k++);
  }
  return p;
}

DeepParams DeepParams::zeros(const std::vector<int>& widths) {
  require_shape(widths.size() >= 2, "deep net needs at least one layer");
  for (int w : widths) require_shape(w > 0, "deep net widths must be positive");
  require_shape(widths.back() == 1, "deep net output width must be 1");
  DeepParams p;
  p.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    p.W.push_back(Mat::Zero(widths[l + 1], widths[l]));
    p.b.push_back(Vec::Zero(widths[l + 1]));
  }
  return p;
}

int DeepParams::flat_index_W(int l, int i, int j) const {
  int off = 0;
  for (int k = 0; k < l; ++k) off += widths[k + 1] * (widths[k] + 1);
  return off + i * widths[l] + j;
}

int DeepParams::flat_index_b(int l, int i) const {
  int off = 0;
  for (int k = 0; k < l; ++k) off += widths[k + 1] * (widths[k] + 1);
  return off + widths[l + 1] * widths[l] + i;
}

// ------------------------------------------------------------------ Linear

namespace {

void enumerate_exponents(int d, int degree, std::vector<int>& cur,
                         std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == d) {
    out.push_back(cur);
    return;
  }
  for (int e = 0; e + std::accumulate(cur.begin(), cur.end(), 0) <= degree; ++e) {
    cur.push_back(e);
    enumerate_exponents(d, degree, cur, out);
    cur.pop_back();
  }
}

}  // namespace

LinearBasis LinearBasis::monomial(int d, int degree) {
  LinearBasis b;
  b.kind = "monomial";
  b.degree = degree;
  b.d = d;
  std::vector<std::vector<int>> exps;
  std::vector<int> cur;
  enumerate_exponents(d, degree, cur, exps);
  for (const auto& e : exps) {
    std::string name = "1";
    for (int j = 0; j < d; ++j) {
      if (e[j] > 0) name += "*x" + std::to_string(j) + "^" + std::to_string(e[j]);
    }
    b.fns.push_back({name, [e](const Vec& x) {
                       double v = 1.0;
                       for (std::size_t j = 0; j < e.size(); ++j)
                         for (int k = 0; k < e[j]; ++k) v *= x(j);
                       return v;
                     }});
  }
  return b;
}

LinearBasis LinearBasis::fourier1d() {
  LinearBasis b;
  b.kind = "fourier";
  b.d = 1;
  b.fns.push_back({"1", [](const Vec&) { return 1.0; }});
  b.fns.push_back({"sin(x)", [](const Vec& x) { return std::sin(x(0)); }});
  b.fns.push_back({"cos(x)", [](const Vec& x) { return std::cos(x(0)); }});
  return b;
}

LinearBasis LinearBasis::custom(int d, std::vector<BasisFn> fns) {
  LinearBasis b;
  b.kind = "custom";
  b.d = d;
  b.fns = std::move(fns);
  return b;
}

Vec LinearBasis::eval(const Vec& x) const {
  Vec out(size());
  for (int i = 0; i < size(); ++i) out(i) = fns[i].fn(x);
  return out;
}

// ------------------------------------------------------------------- Model

Model Model::two_layer(ActivationDescriptor act, int m, int d) {
  require_shape(m > 0 && d > 0, "two-layer model needs m > 0 and d > 0");
  Model f;
  f.kind_ = ModelKind::two_layer;
  f.act_ = std::move(act);
  f.m_ = m;
  f.input_dim_ = d;
  f.param_count_ = (d + 1) * m;
  return f;
}

Model Model::mlp(ActivationDescriptor act, std::vector<int> widths, bool linear_readout) {
  DeepParams probe = DeepParams::zeros(widths);
  Model f;
  f.kind_ = ModelKind::mlp;
  f.act_ = std::move(act);
  f.widths_ = std::move(widths);
  f.input_dim_ = f.widths_.front();
  f.param_count_ = probe.param_count();
  f.linear_readout_ = linear_readout;
  return f;
}

Model Model::linear(LinearBasis basis) {
  require_shape(basis.size() > 0, "linear model needs a nonempty basis");
  Model f;
  f.kind_ = ModelKind::linear;
  f.basis_ = std::move(basis);
  f.input_dim_ = f.basis_.d;
  f.param_count_ = f.basis_.size();
  return f;
}

void Model::check_theta(const Vec& theta) const {
  require_shape(theta.size() == param_count_, "theta length does not match model");
}

void Model::check_x(const Vec& x) const {
  require_shape(x.size() == input_dim_, "input length does not match model");
}

TwoLayerParams Model::as_two_layer(const Vec& theta) const {
  require_shape(kind_ == ModelKind::two_layer, "model is not two-layer");
  return TwoLayerParams::unflatten(theta, m_, input_dim_);
}

DeepParams Model::as_deep(const Vec& theta) const {
  require_shape(kind_ == ModelKind::mlp, "model is not an mlp");
  return DeepParams::unflatten(theta, widths_);
}

double Model::forward(const Vec& theta, const Vec& x) const {
  check_theta(theta);
  check_x(x);
  switch (kind_) {
    case ModelKind::two_layer: {
      const int d = input_dim_;
      double out = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double s = theta.segment((d + 1) * i + 1, d).dot(x);
        out += theta((d + 1) * i) * act_.eval(s);
      }
      return out;
    }
    case ModelKind::mlp: {
      DeepParams p = as_deep(theta);
      Vec a = x;
      const int L = p.layer_count();
      for (int l = 0; l < L; ++l) {
        Vec z = p.W[l] * a + p.b[l];
        if (l == L - 1 && linear_readout_) {
          a = z;
        } else {
          a = z.unaryExpr([this](double v) { return act_.eval(v); });
        }
      }
      return a(0);
    }
    case ModelKind::linear:
      return theta.dot(basis_.eval(x));
  }
  return 0.0;
}

Vec Model::grad_theta(const Vec& theta, const Vec& x) const {
  check_theta(theta);
  check_x(x);
  switch (kind_) {
    case ModelKind::two_layer: {
      const int d = input_dim_;
      Vec g(param_count_);
      for (int i = 0; i < m_; ++i) {
        const double ai = theta((d + 1) * i);
        const double s = theta.segment((d + 1) * i + 1, d).dot(x);
        g((d + 1) * i) = act_.eval(s);
        g.segment((d + 1) * i + 1, d) = ai * act_.d1(s) * x;
      }
      return g;
    }
    case ModelKind::mlp: {
      DeepParams p = as_deep(theta);
      const int L = p.layer_count();
      std::vector<Vec> acts(L + 1), zs(L);
      acts[0] = x;
      for (int l = 0; l < L; ++l) {
        zs[l] = p.W[l] * acts[l] + p.b[l];
        if (l == L - 1 && linear_readout_) {
          acts[l + 1] = zs[l];
        } else {
          acts[l + 1] = zs[l].unaryExpr([this](double v) { return act_.eval(v); });
        }
      }
      // delta^(L) = sigma'(z^(L)) (or 1 under a linear readout), then
      // delta^(l) = diag(sigma'(z^(l))) W^(l+1)^T delta^(l+1).
      std::vector<Vec> delta(L);
      if (linear_readout_) {
        delta[L - 1] = Vec::Ones(1);
      } else {
        delta[L - 1] = zs[L - 1].unaryExpr([this](double v) { return act_.d1(v); });
      }
      for (int l = L - 2; l >= 0; --l) {
        Vec back = p.W[l + 1].transpose() * delta[l + 1];
        delta[l] = zs[l].unaryExpr([this](double v) { return act_.d1(v); }).cwiseProduct(back);
      }
      DeepParams g = DeepParams::zeros(widths_);
      for (int l = 0; l < L; ++l) {
        g.W[l] = delta[l] * acts[l].transpose();
        g.b[l] = delta[l];
      }
      return g.flatten();
    }
    case ModelKind::linear:
      return basis_.eval(x);
  }
  return Vec();
}

Vec Model::hess_theta_vec(const Vec& theta, const Vec& x, const Vec& v) const {
  check_theta(theta);
  check_x(x);
  require_shape(v.size() == param_count_, "direction length does not match model");
  Vec out;
  switch (kind_) {
    case ModelKind::two_layer: {
      // The Hessian is block-diagonal per neuron:
      //   d2F/da_i dw_i = sigma'(s_i) x,  d2F/dw_i dw_i = a_i sigma''(s_i) x x^T.
      const int d = input_dim_;
      out.resize(param_count_);
      for (int i = 0; i < m_; ++i) {
        const double ai = theta((d + 1) * i);
        const double va = v((d + 1) * i);
        const auto wv = v.segment((d + 1) * i + 1, d);
        const double s = theta.segment((d + 1) * i + 1, d).dot(x);
        const double s1 = act_.d1(s);
        const double s2 = act_.d2(s);
        const double xv = x.dot(wv);
        out((d + 1) * i) = s1 * xv;
        out.segment((d + 1) * i + 1, d) = va * s1 * x + ai * s2 * xv * x;
      }
      break;
    }
    case ModelKind::mlp: {
      const double vn = inf_norm(v);
      if (vn == 0.0) return Vec::Zero(param_count_);
      const double h = fd_step(inf_norm(theta), vn);
      out = (grad_theta(theta + h * v, x) - grad_theta(theta - h * v, x)) / (2.0 * h);
      break;
    }
    case ModelKind::linear:
      return Vec::Zero(param_count_);
  }
  if (!out.allFinite()) throw NumericError("non-finite Hessian-vector product");
  return out;
}

}  // namespace simlab
