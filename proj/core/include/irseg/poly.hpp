#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace irseg {

/// Number of monomials of degree <= n in d variables, C(d + n, n).
/// Saturates at SIZE_MAX on overflow.
std::size_t expansion_dim(std::size_t d, int n);

/// Explicit feature map of the inhomogeneous polynomial kernel (a0 + x.x')^n.
///
/// Each output coordinate is one monomial x^k (|k| <= n) scaled by
/// sqrt(n! / (k0! k1! ... kd!) * a0^k0), k0 = n - |k|, so that
/// phi(x).phi(x') reproduces the kernel exactly. Monomials are ordered by
/// total degree, then lexicographically by exponent vector.
class PolynomialExpansion {
 public:
  static constexpr std::size_t kDefaultMaxDim = 20000;

  PolynomialExpansion(std::size_t input_dim, int order, double bias = 1.0,
                      std::size_t max_dim = kDefaultMaxDim);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return coeff_.size(); }
  int order() const { return order_; }
  double bias() const { return bias_; }

  Eigen::VectorXd expand(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Expands each row of `x`.
  Eigen::MatrixXd expand_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Exponent vector of output coordinate `j` (length input_dim).
  const std::vector<int>& exponents(std::size_t j) const { return exponents_[j]; }

 private:
  std::size_t input_dim_;
  int order_;
  double bias_;
  std::vector<std::vector<int>> exponents_;
  std::vector<double> coeff_;
  // Monomials of degree k are built from a parent monomial of degree k-1 times one variable.
  std::vector<std::ptrdiff_t> parent_;
  std::vector<int> factor_var_;
};

}  // namespace irseg
