#pragma once

#include <functional>
#include <string>
#include <vector>

namespace simlab {

enum class Parity { odd, even, neither };

enum class ActivationClass { generic, generic_odd, other };

/// A scalar analytic activation with hand-coded first and second derivatives
/// and the structural flags that decide which parameter-space symmetries the
/// networks built from it admit.
struct ActivationDescriptor {
  std::string name;
  std::function<double(double)> eval;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
  double value_at_zero = 0.0;
  double deriv_at_zero = 0.0;
  Parity parity = Parity::neither;
  bool is_polynomial = false;
  ActivationClass classification = ActivationClass::other;
};

/// generic: no parity, sigma(0) != 0, sigma'(0) != 0, not a polynomial.
/// generic_odd: odd, sigma'(0) != 0, not a polynomial. Everything else: other.
ActivationClass classify_activation(Parity parity, double value_at_zero,
                                    double deriv_at_zero, bool is_polynomial);

/// Registry lookup. Ships tanh, sigmoid, softplus, exp, coshm1, sin. Throws
/// ConfigError for unknown names.
const ActivationDescriptor& activation(const std::string& name);

std::vector<std::string> activation_names();

const char* to_string(Parity p);
const char* to_string(ActivationClass c);

}  // namespace simlab
