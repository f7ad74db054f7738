#include "simlab/activation.hpp"

#include <cmath>
#include <map>

#include "simlab/common.hpp"

namespace simlab {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  // log(1 + e^x), stable in both tails.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

ActivationDescriptor make(std::string name, std::function<double(double)> f,
                          std::function<double(double)> f1,
                          std::function<double(double)> f2, Parity parity) {
  ActivationDescriptor a;
  a.name = std::move(name);
  a.eval = std::move(f);
  a.d1 = std::move(f1);
  a.d2 = std::move(f2);
  a.value_at_zero = a.eval(0.0);
  a.deriv_at_zero = a.d1(0.0);
  a.parity = parity;
  a.is_polynomial = false;
  a.classification = classify_activation(parity, a.value_at_zero, a.deriv_at_zero, false);
  return a;
}

const std::map<std::string, ActivationDescriptor>& registry() {
  static const std::map<std::string, ActivationDescriptor> reg = [] {
    std::map<std::string, ActivationDescriptor> r;
    r["tanh"] = make(
        "tanh", [](double x) { return std::tanh(x); },
        [](double x) {
          const double t = std::tanh(x);
          return 1.0 - t * t;
        },
        [](double x) {
          const double t = std::tanh(x);
          return -2.0 * t * (1.0 - t * t);
        },
        Parity::odd);
    r["sigmoid"] = make(
        "sigmoid", [](double x) { return sigmoid(x); },
        [](double x) {
          const double s = sigmoid(x);
          return s * (1.0 - s);
        },
        [](double x) {
          const double s = sigmoid(x);
          return s * (1.0 - s) * (1.0 - 2.0 * s);
        },
        Parity::neither);
    r["softplus"] = make(
        "softplus", [](double x) { return softplus(x); },
        [](double x) { return sigmoid(x); },
        [](double x) {
          const double s = sigmoid(x);
          return s * (1.0 - s);
        },
        Parity::neither);
    r["exp"] = make(
        "exp", [](double x) { return std::exp(x); },
        [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); },
        Parity::neither);
    // cosh(x) - 1: even with sigma(0) = 0 and sigma'(0) = 0.
    r["coshm1"] = make(
        "coshm1", [](double x) { return std::cosh(x) - 1.0; },
        [](double x) { return std::sinh(x); }, [](double x) { return std::cosh(x); },
        Parity::even);
    r["sin"] = make(
        "sin", [](double x) { return std::sin(x); },
        [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); },
        Parity::odd);
    return r;
  }();
  return reg;
}

}  // namespace

ActivationClass classify_activation(Parity parity, double value_at_zero,
                                    double deriv_at_zero, bool is_polynomial) {
  if (is_polynomial) return ActivationClass::other;
  if (parity == Parity::neither && value_at_zero != 0.0 && deriv_at_zero != 0.0) {
    return ActivationClass::generic;
  }
  if (parity == Parity::odd && deriv_at_zero != 0.0) {
    return ActivationClass::generic_odd;
  }
  return ActivationClass::other;
}

const ActivationDescriptor& activation(const std::string& name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw ConfigError("unknown activation: " + name);
  return it->second;
}

std::vector<std::string> activation_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

const char* to_string(Parity p) {
  switch (p) {
    case Parity::odd: return "odd";
    case Parity::even: return "even";
    default: return "neither";
  }
}

const char* to_string(ActivationClass c) {
  switch (c) {
    case ActivationClass::generic: return "generic";
    case ActivationClass::generic_odd: return "generic_odd";
    default: return "other";
  }
}

}  // namespace simlab
