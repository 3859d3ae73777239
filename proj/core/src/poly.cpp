#include "irseg/poly.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "irseg/error.hpp"

namespace irseg {
namespace {

void compositions(std::size_t var, int remaining, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (var + 1 == cur.size()) {
    cur[var] = remaining;
    out.push_back(cur);
    return;
  }
  for (int k = remaining; k >= 0; --k) {
    cur[var] = k;
    compositions(var + 1, remaining - k, cur, out);
  }
}

}  // namespace

std::size_t expansion_dim(std::size_t d, int n) {
  // C(d + n, n) computed incrementally: C(d+k, k) = C(d+k-1, k-1) * (d+k) / k.
  std::size_t c = 1;
  for (int k = 1; k <= n; ++k) {
    const auto num = d + static_cast<std::size_t>(k);
    if (c > std::numeric_limits<std::size_t>::max() / num) return std::numeric_limits<std::size_t>::max();
    c = c * num / static_cast<std::size_t>(k);
  }
  return c;
}

PolynomialExpansion::PolynomialExpansion(std::size_t input_dim, int order, double bias, std::size_t max_dim)
    : input_dim_(input_dim), order_(order), bias_(bias) {
  if (order_ < 1) throw usage_error("poly.order", "expansion order must be >= 1");
  if (!(bias_ > 0)) throw usage_error("poly.bias", "expansion bias a0 must be > 0");
  if (input_dim_ == 0) throw usage_error("poly.dim", "expansion input dimension must be >= 1");
  const std::size_t dim = expansion_dim(input_dim_, order_);
  if (dim > max_dim) {
    throw usage_error("poly.overflow", "expanded dimension " + std::to_string(dim) + " exceeds cap " +
                                           std::to_string(max_dim));
  }

  std::vector<int> cur(input_dim_, 0);
  for (int deg = 0; deg <= order_; ++deg) compositions(0, deg, cur, exponents_);

  std::map<std::vector<int>, std::ptrdiff_t> index;
  for (std::size_t j = 0; j < exponents_.size(); ++j) index.emplace(exponents_[j], static_cast<std::ptrdiff_t>(j));

  const double log_n_fact = std::lgamma(order_ + 1.0);
  coeff_.resize(exponents_.size());
  parent_.assign(exponents_.size(), -1);
  factor_var_.assign(exponents_.size(), -1);
  for (std::size_t j = 0; j < exponents_.size(); ++j) {
    const auto& e = exponents_[j];
    int degree = 0;
    double log_denom = 0;
    for (int k : e) {
      degree += k;
      log_denom += std::lgamma(k + 1.0);
    }
    const int k0 = order_ - degree;
    log_denom += std::lgamma(k0 + 1.0);
    coeff_[j] = std::sqrt(std::exp(log_n_fact - log_denom) * std::pow(bias_, k0));
    if (degree > 0) {
      std::size_t v = 0;
      while (e[v] == 0) ++v;
      auto p = e;
      --p[v];
      parent_[j] = index.at(p);
      factor_var_[j] = static_cast<int>(v);
    }
  }
}

Eigen::VectorXd PolynomialExpansion::expand(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim_) {
    throw data_error("poly.dim_mismatch", "expansion input has wrong dimension");
  }
  const auto m = static_cast<Eigen::Index>(coeff_.size());
  Eigen::VectorXd mono(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto p = parent_[static_cast<std::size_t>(j)];
    mono(j) = p < 0 ? 1.0 : mono(p) * x(factor_var_[static_cast<std::size_t>(j)]);
  }
  for (Eigen::Index j = 0; j < m; ++j) mono(j) *= coeff_[static_cast<std::size_t>(j)];
  return mono;
}

Eigen::MatrixXd PolynomialExpansion::expand_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim_) {
    throw data_error("poly.dim_mismatch", "expansion input has wrong dimension");
  }
  const auto m = static_cast<Eigen::Index>(coeff_.size());
  Eigen::MatrixXd out(x.rows(), m);
  // Column-wise recurrence: every monomial column is its parent column times one input column.
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto p = parent_[static_cast<std::size_t>(j)];
    if (p < 0) {
      out.col(j).setOnes();
    } else {
      out.col(j) = out.col(p).cwiseProduct(x.col(factor_var_[static_cast<std::size_t>(j)]));
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) out.col(j) *= coeff_[static_cast<std::size_t>(j)];
  return out;
}

}  // namespace irseg
