#include "xfer/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace xfer {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_rows(const MatrixXd& x, Index min_rows, const char* fn) {
  if (x.rows() < min_rows) {
    throw std::invalid_argument(std::string(fn) + ": need at least " + std::to_string(min_rows) + " samples, got " +
                                std::to_string(x.rows()));
  }
}

MatrixXd centered(const MatrixXd& x) { return x.rowwise() - x.colwise().mean(); }

// Uniform double in [0, 1) from the top 53 bits. Unlike
// std::uniform_real_distribution this is identical on every standard library.
double next_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Index nearest_centroid(const MatrixXd& x, Index i, const MatrixXd& centroids, double* dist2) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < centroids.rows(); ++k) {
    const double d = (x.row(i) - centroids.row(k)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

MatrixXd kmeans_plus_plus(const MatrixXd& x, Index k, std::mt19937_64& rng) {
  const Index n = x.rows();
  MatrixXd centroids(k, x.cols());
  const auto first = std::min<Index>(static_cast<Index>(next_unit(rng) * static_cast<double>(n)), n - 1);
  centroids.row(0) = x.row(first);

  VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centroids.row(0)).squaredNorm();

  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      const double target = next_unit(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::min<Index>(static_cast<Index>(next_unit(rng) * static_cast<double>(n)), n - 1);
    }
    centroids.row(c) = x.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

// Moves the farthest point of a multi-member cluster into each empty cluster.
void reseed_empty(const MatrixXd& x, MatrixXd& centroids, std::vector<Index>& assign, std::vector<Index>& counts) {
  for (Index k = 0; k < centroids.rows(); ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) continue;
    Index donor = -1;
    double donor_d = -1.0;
    for (Index i = 0; i < x.rows(); ++i) {
      const Index owner = assign[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(owner)] < 2) continue;
      const double d = (x.row(i) - centroids.row(owner)).squaredNorm();
      if (d > donor_d) {
        donor_d = d;
        donor = i;
      }
    }
    if (donor < 0) throw std::logic_error("gmm_fit: cannot reseed an empty cluster");
    --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(donor)])];
    assign[static_cast<std::size_t>(donor)] = k;
    counts[static_cast<std::size_t>(k)] = 1;
    centroids.row(k) = x.row(donor);
  }
}

std::vector<Index> kmeans(const MatrixXd& x, MatrixXd& centroids, int iterations) {
  const Index n = x.rows();
  const Index k = centroids.rows();
  std::vector<Index> assign(static_cast<std::size_t>(n), 0);
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);

  auto assign_all = [&] {
    std::fill(counts.begin(), counts.end(), 0);
    for (Index i = 0; i < n; ++i) {
      assign[static_cast<std::size_t>(i)] = nearest_centroid(x, i, centroids, nullptr);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    reseed_empty(x, centroids, assign, counts);
  };

  assign_all();
  for (int it = 0; it < iterations; ++it) {
    centroids.setZero();
    for (Index i = 0; i < n; ++i) centroids.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
    for (Index c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    assign_all();
  }
  return assign;
}

// n x K matrix of log(w_k) + log N(x_i | mu_k, Sigma_k).
MatrixXd weighted_log_densities(const GaussianMixture& gm, const MatrixXd& x) {
  const Index n = x.rows();
  const Index d = x.cols();
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  MatrixXd out(n, gm.components());
  for (Index k = 0; k < gm.components(); ++k) {
    Eigen::LLT<MatrixXd> llt(gm.covariances[static_cast<std::size_t>(k)]);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("gaussian mixture component " + std::to_string(k) + " is not positive-definite");
    }
    const MatrixXd diff = (x.rowwise() - gm.means.row(k)).transpose();
    const MatrixXd z = llt.matrixL().solve(diff);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double base = std::log(gm.weights(k)) - 0.5 * (static_cast<double>(d) * log_2pi + log_det);
    out.col(k) = (base - 0.5 * z.colwise().squaredNorm().array()).transpose();
  }
  return out;
}

void require_dims(const GaussianMixture& gm, const MatrixXd& x) {
  if (x.cols() != gm.dim()) {
    throw std::invalid_argument("mixture has dimension " + std::to_string(gm.dim()) + " but data has " +
                                std::to_string(x.cols()) + " columns");
  }
}

}  // namespace

MatrixXd sample_covariance(const MatrixXd& x, bool center) {
  require_rows(x, 2, "sample_covariance");
  const double n = static_cast<double>(x.rows());
  if (center) {
    const MatrixXd xc = centered(x);
    return (xc.transpose() * xc) / n;
  }
  return (x.transpose() * x) / n;
}

ShrunkCovariance ledoit_wolf(const MatrixXd& x, std::optional<double> fixed_shrinkage) {
  require_rows(x, 2, "ledoit_wolf");
  if (fixed_shrinkage && !(*fixed_shrinkage >= 0.0 && *fixed_shrinkage <= 1.0)) {
    throw std::invalid_argument("ledoit_wolf: shrinkage must lie in [0, 1]");
  }
  const double n = static_cast<double>(x.rows());
  const Index d = x.cols();
  const MatrixXd xc = centered(x);
  const MatrixXd s = (xc.transpose() * xc) / n;
  const double mu = s.trace() / static_cast<double>(d);
  const MatrixXd target = mu * MatrixXd::Identity(d, d);

  double alpha = 0.0;
  if (fixed_shrinkage) {
    alpha = *fixed_shrinkage;
  } else {
    const double delta = (s - target).squaredNorm() / static_cast<double>(d);
    if (delta > 0.0) {
      // sum_t ||x_t x_t' - S||_F^2 = sum_t ||x_t||^4 - n ||S||_F^2
      const double fourth = xc.rowwise().squaredNorm().array().square().sum();
      const double spread = std::max(0.0, fourth / n - s.squaredNorm());
      const double beta = std::min(spread / (n * static_cast<double>(d)), delta);
      alpha = std::clamp(beta / delta, 0.0, 1.0);
    }
  }
  return {(1.0 - alpha) * s + alpha * target, alpha};
}

MatrixXd PcaModel::transform(const MatrixXd& x) const { return (x.rowwise() - mean.transpose()) * axes; }

MatrixXd PcaModel::inverse_transform(const MatrixXd& z) const {
  return (z * axes.transpose()).rowwise() + mean.transpose();
}

PcaModel pca_fit(const MatrixXd& x, const PcaCriterion& criterion) {
  require_rows(x, 2, "pca_fit");
  if (criterion.kind == PcaCriterion::Kind::kVarianceFraction &&
      !(criterion.variance_fraction > 0.0 && criterion.variance_fraction <= 1.0)) {
    throw std::invalid_argument("pca_fit: variance fraction must lie in (0, 1]");
  }
  if (criterion.kind == PcaCriterion::Kind::kFixedComponents && criterion.components < 1) {
    throw std::invalid_argument("pca_fit: component count must be positive");
  }

  const Index n = x.rows();
  const Index d = x.cols();
  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const MatrixXd xc = centered(x);

  VectorXd variances;  // descending
  MatrixXd vectors;    // matching columns
  if (d <= n) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig((xc.transpose() * xc) / static_cast<double>(n));
    variances = eig.eigenvalues().reverse();
    vectors = eig.eigenvectors().rowwise().reverse();
  } else {
    Eigen::BDCSVD<MatrixXd> svd(xc, Eigen::ComputeThinV);
    variances = svd.singularValues().array().square() / static_cast<double>(n);
    vectors = svd.matrixV();
  }

  const double total = variances.cwiseMax(0.0).sum();
  if (!(total > 0.0)) throw std::invalid_argument("pca_fit: data has zero variance");
  Index rank = 0;
  while (rank < variances.size() && variances(rank) > 1e-12 * variances(0)) ++rank;

  Index k = 0;
  if (criterion.kind == PcaCriterion::Kind::kFixedComponents) {
    k = std::min({criterion.components, n - 1, d, rank});
  } else {
    double cumulative = 0.0;
    while (k < rank) {
      cumulative += variances(k) / total;
      ++k;
      if (cumulative >= criterion.variance_fraction - 1e-12) break;
    }
  }

  model.axes = vectors.leftCols(k);
  for (Index j = 0; j < k; ++j) {
    Index arg = 0;
    model.axes.col(j).cwiseAbs().maxCoeff(&arg);
    if (model.axes(arg, j) < 0.0) model.axes.col(j) *= -1.0;
  }
  model.explained_ratio = variances.head(k) / total;
  return model;
}

GmmFit gmm_fit(const MatrixXd& x, int components, std::uint64_t seed, const GmmOptions& options) {
  const Index n = x.rows();
  const Index d = x.cols();
  const Index k = components;
  if (k < 1) throw std::invalid_argument("gmm_fit: need at least one component");
  if (k > n) {
    throw std::invalid_argument("gmm_fit: " + std::to_string(k) + " components exceed " + std::to_string(n) +
                                " samples");
  }
  if (d < 1) throw std::invalid_argument("gmm_fit: data has no columns");

  GmmFit fit;
  const VectorXd column_var = centered(x).colwise().squaredNorm() / static_cast<double>(n);
  fit.covariance_floor = 1e-6 * column_var.mean();
  if (!(fit.covariance_floor > 0.0)) fit.covariance_floor = 1e-6;
  const MatrixXd floor_eye = fit.covariance_floor * MatrixXd::Identity(d, d);

  std::mt19937_64 rng(seed);
  MatrixXd centroids = kmeans_plus_plus(x, k, rng);
  const auto assign = kmeans(x, centroids, options.kmeans_iterations);

  GaussianMixture& gm = fit.mixture;
  gm.weights = VectorXd::Zero(k);
  gm.means = MatrixXd::Zero(k, d);
  gm.covariances.assign(static_cast<std::size_t>(k), MatrixXd::Zero(d, d));
  for (Index i = 0; i < n; ++i) {
    const Index c = assign[static_cast<std::size_t>(i)];
    gm.weights(c) += 1.0;
    gm.means.row(c) += x.row(i);
  }
  for (Index c = 0; c < k; ++c) gm.means.row(c) /= gm.weights(c);
  for (Index i = 0; i < n; ++i) {
    const Index c = assign[static_cast<std::size_t>(i)];
    const VectorXd diff = (x.row(i) - gm.means.row(c)).transpose();
    gm.covariances[static_cast<std::size_t>(c)] += diff * diff.transpose();
  }
  for (Index c = 0; c < k; ++c) {
    auto& cov = gm.covariances[static_cast<std::size_t>(c)];
    cov = cov / gm.weights(c) + floor_eye;
  }
  gm.weights /= static_cast<double>(n);

  double previous = 0.0;
  for (int it = 0;; ++it) {
    MatrixXd log_resp = weighted_log_densities(gm, x);
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double lse = log_sum_exp(log_resp.row(i).transpose());
      ll += lse;
      log_resp.row(i).array() -= lse;
    }
    fit.log_likelihood_trace.push_back(ll);
    if (it > 0 && std::abs(ll - previous) <= options.tolerance * std::abs(previous)) {
      fit.converged = true;
      break;
    }
    if (it >= options.max_iterations) break;
    previous = ll;

    const MatrixXd resp = log_resp.array().exp().matrix();
    const VectorXd mass = resp.colwise().sum().transpose();
    for (Index c = 0; c < k; ++c) {
      if (!(mass(c) > 1e-12 * static_cast<double>(n))) {
        // Collapsed component: keep its mean, reset its shape to the floor.
        gm.weights(c) = mass(c) / static_cast<double>(n);
        gm.covariances[static_cast<std::size_t>(c)] = floor_eye;
        continue;
      }
      gm.weights(c) = mass(c) / static_cast<double>(n);
      gm.means.row(c) = (resp.col(c).transpose() * x) / mass(c);
      const MatrixXd diff = x.rowwise() - gm.means.row(c);
      gm.covariances[static_cast<std::size_t>(c)] =
          (diff.transpose() * resp.col(c).asDiagonal() * diff) / mass(c) + floor_eye;
    }
    gm.weights /= gm.weights.sum();
    fit.iterations = it + 1;
  }
  return fit;
}

MatrixXd gmm_posteriors(const GaussianMixture& mixture, const MatrixXd& x) {
  require_dims(mixture, x);
  MatrixXd log_resp = weighted_log_densities(mixture, x);
  for (Index i = 0; i < x.rows(); ++i) {
    const double lse = log_sum_exp(log_resp.row(i).transpose());
    log_resp.row(i).array() = (log_resp.row(i).array() - lse).exp();
  }
  return log_resp;
}

VectorXd gmm_log_density(const GaussianMixture& mixture, const MatrixXd& x) {
  require_dims(mixture, x);
  const MatrixXd log_w = weighted_log_densities(mixture, x);
  VectorXd out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = log_sum_exp(log_w.row(i).transpose());
  return out;
}

MatrixXd pseudo_inverse(const MatrixXd& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("pseudo_inverse: matrix must be square");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  const VectorXd& lambda = eig.eigenvalues();
  const double max_abs = lambda.cwiseAbs().maxCoeff();
  if (!(max_abs > 0.0)) return MatrixXd::Zero(s.rows(), s.cols());
  const double cutoff = 1e-10 * max_abs;
  VectorXd inv(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) inv(i) = std::abs(lambda(i)) < cutoff ? 0.0 : 1.0 / lambda(i);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

MatrixXd softmax_rows(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double log_sum_exp(const Eigen::Ref<const VectorXd>& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

MatrixXd standardize_columns(const MatrixXd& x) {
  require_rows(x, 2, "standardize_columns");
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const MatrixXd xc = x.rowwise() - mean;
  const Eigen::RowVectorXd sd = (xc.colwise().squaredNorm() / n).array().sqrt();
  std::vector<Index> keep;
  for (Index j = 0; j < x.cols(); ++j) {
    if (sd(j) > 1e-12 * std::max(1.0, std::abs(mean(j)))) keep.push_back(j);
  }
  MatrixXd out(x.rows(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Index>(j)) = xc.col(keep[j]) / sd(keep[j]);
  return out;
}

}  // namespace xfer
