#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "cputs/rng.hpp"
#include "cputs/stats.hpp"

namespace cputs {

//! Gaussian radial basis psi_k(x) = exp(-|x - mu_k|^2 / (2 sigma^2)) over the
//! covariate space, common bandwidth for all centers. The L2 Gram matrix has a
//! closed form, so covariate-space integrals never need quadrature.
class RbfBasis
{
public:
  RbfBasis(Eigen::MatrixXd centers, double bandwidth)
    : centers_(std::move(centers))
    , sigma_(bandwidth)
  {
    if (sigma_ <= 0.0)
      throw std::invalid_argument("RbfBasis: bandwidth must be positive");
    if (centers_.rows() < 1)
      throw std::invalid_argument("RbfBasis: need at least one center");
  }

  //! Centers from the pooled source+target covariates: the K equally spaced
  //! empirical quantiles for p = 1, seeded k-means centroids for p > 1.
  //! Bandwidth by Silverman's rule on the source training covariates
  //! (mean of the per-coordinate rules when p > 1).
  static RbfBasis from_data(const Eigen::MatrixXd& pooled,
                            const Eigen::MatrixXd& source_train,
                            int count,
                            std::uint64_t seed = 12345)
  {
    if (count < 1)
      throw std::invalid_argument("RbfBasis: count must be >= 1");
    if (pooled.rows() < 1 || pooled.cols() != source_train.cols())
      throw std::invalid_argument("RbfBasis: inconsistent covariate data");
    if (distinct_rows(pooled) < static_cast<std::size_t>(count))
      throw std::invalid_argument("RbfBasis: count exceeds number of distinct rows");

    const auto p = pooled.cols();
    Eigen::MatrixXd centers(count, p);
    if (p == 1) {
      std::vector<double> col(pooled.data(), pooled.data() + pooled.rows());
      for (int k = 0; k < count; ++k)
        centers(k, 0) = sample_quantile(col, static_cast<double>(k + 1) / static_cast<double>(count + 1));
    } else {
      centers = kmeans_centers(pooled, count, seed);
    }

    const auto n = static_cast<double>(source_train.rows());
    double sigma = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Eigen::VectorXd col = source_train.col(j);
      const double spread = std::min(sample_sd(col), sample_iqr(col) / 1.349);
      sigma += 1.06 * spread * std::pow(n, -0.2);
    }
    sigma /= static_cast<double>(p);
    if (!(sigma > 0.0))
      throw std::invalid_argument("RbfBasis: degenerate covariate spread, Silverman bandwidth is zero");
    return RbfBasis(std::move(centers), sigma);
  }

  int count() const { return static_cast<int>(centers_.rows()); }
  int dim() const { return static_cast<int>(centers_.cols()); }
  double bandwidth() const { return sigma_; }
  const Eigen::MatrixXd& centers() const { return centers_; }

  Eigen::VectorXd evaluate(const Eigen::RowVectorXd& x) const
  {
    Eigen::VectorXd out(count());
    evaluate_into(x, out);
    return out;
  }

  void evaluate_into(const Eigen::RowVectorXd& x, Eigen::VectorXd& out) const
  {
    const double inv = 1.0 / (2.0 * sigma_ * sigma_);
    out = (-(centers_.rowwise() - x).rowwise().squaredNorm() * inv).array().exp();
  }

  //! Exact L2 Gram matrix: U_kl = (pi sigma^2)^(p/2) exp(-|mu_k - mu_l|^2 / (4 sigma^2)),
  //! from the product-of-Gaussians identity for a common bandwidth.
  Eigen::MatrixXd gram() const
  {
    const int k = count();
    const double scale = std::pow(M_PI * sigma_ * sigma_, 0.5 * dim());
    Eigen::MatrixXd u(k, k);
    for (int a = 0; a < k; ++a) {
      u(a, a) = scale;
      for (int b = a + 1; b < k; ++b) {
        const double d2 = (centers_.row(a) - centers_.row(b)).squaredNorm();
        u(a, b) = u(b, a) = scale * std::exp(-d2 / (4.0 * sigma_ * sigma_));
      }
    }
    return u;
  }

private:
  static std::size_t distinct_rows(const Eigen::MatrixXd& m)
  {
    std::set<std::vector<double>> seen;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      seen.emplace(m.row(i).data(), m.row(i).data() + m.cols());
    return seen.size();
  }

  //! Lloyd's algorithm with k-means++ style seeding from a fixed stream.
  static Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& data, int k, std::uint64_t seed)
  {
    Rng rng(seed);
    const auto n = data.rows();
    Eigen::MatrixXd centers(k, data.cols());
    centers.row(0) = data.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
    Eigen::VectorXd d2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = d2.sum();
      Eigen::Index pick = 0;
      if (total > 0.0) {
        double r = rng.uniform() * total;
        for (; pick + 1 < n; ++pick) {
          r -= d2[pick];
          if (r <= 0.0)
            break;
        }
      }
      centers.row(c) = data.row(pick);
      d2 = d2.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        double bd = (data.row(i) - centers.row(0)).squaredNorm();
        for (int c = 1; c < k; ++c) {
          const double d = (data.row(i) - centers.row(c)).squaredNorm();
          if (d < bd) {
            bd = d;
            best = c;
          }
        }
        if (assign[static_cast<std::size_t>(i)] != best) {
          assign[static_cast<std::size_t>(i)] = best;
          changed = true;
        }
      }
      if (!changed && iter > 0)
        break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += data.row(i);
        counts[assign[static_cast<std::size_t>(i)]] += 1.0;
      }
      for (int c = 0; c < k; ++c)
        if (counts[c] > 0.0)
          centers.row(c) = sums.row(c) / counts[c];
    }
    return centers;
  }

  Eigen::MatrixXd centers_;
  double sigma_;
};

//! Default covariate-basis size: ceil(sqrt(n)) clipped to [5, 25]. The
//! covariate sieve can afford to grow faster than the response sieve because
//! the Gram-metric ridge keeps the matching solve well posed as centers
//! crowd together.
inline int rbf_count_rule(std::size_t n_train)
{
  const int k = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_train))));
  return std::clamp(k, 5, 25);
}

} // namespace cputs
