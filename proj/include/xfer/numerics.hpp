#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace xfer {

// Covariance with divisor n. With center=false the raw second moment X'X/n is returned.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x, bool center = true);

struct ShrunkCovariance {
  Eigen::MatrixXd covariance;
  double shrinkage = 0.0;  // weight on the scaled-identity target, in [0, 1]
};

// Ledoit-Wolf shrinkage toward (tr(S)/d) I. When `fixed_shrinkage` is set the
// estimated intensity is replaced by it.
ShrunkCovariance ledoit_wolf(const Eigen::MatrixXd& x, std::optional<double> fixed_shrinkage = std::nullopt);

struct PcaCriterion {
  enum class Kind { kVarianceFraction, kFixedComponents };
  Kind kind = Kind::kVarianceFraction;
  double variance_fraction = 0.8;
  Eigen::Index components = 0;

  static PcaCriterion fraction(double p) { return {Kind::kVarianceFraction, p, 0}; }
  static PcaCriterion fixed(Eigen::Index k) { return {Kind::kFixedComponents, 1.0, k}; }
};

struct PcaModel {
  Eigen::VectorXd mean;             // d
  Eigen::MatrixXd axes;             // d x k, orthonormal columns
  Eigen::VectorXd explained_ratio;  // k, nonincreasing

  Eigen::Index components() const { return axes.cols(); }
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd inverse_transform(const Eigen::MatrixXd& z) const;
};

// Components with zero variance are never kept, so k <= rank(X).
// Each axis is sign-normalized so its largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::MatrixXd& x, const PcaCriterion& criterion);

struct GaussianMixture {
  Eigen::VectorXd weights;                   // K
  Eigen::MatrixXd means;                     // K x d
  std::vector<Eigen::MatrixXd> covariances;  // K of d x d

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }
};

struct GmmOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;  // relative change of the total log-likelihood
  int kmeans_iterations = 10;
};

struct GmmFit {
  GaussianMixture mixture;
  double covariance_floor = 0.0;
  // Total log-likelihood at the start of every EM iteration, plus the final value.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;
  bool converged = false;
};

// Full-covariance EM. Initialized from seeded k-means++ followed by Lloyd
// refinement. A cluster left empty is reseeded with the point farthest from
// its assigned centroid (lowest index on ties), so the fit is a pure
// function of (x, components, seed).
// Each covariance receives a diagonal floor of 1e-6 * mean feature variance.
GmmFit gmm_fit(const Eigen::MatrixXd& x, int components, std::uint64_t seed, const GmmOptions& options = {});

// n x K responsibilities, computed in the log domain.
Eigen::MatrixXd gmm_posteriors(const GaussianMixture& mixture, const Eigen::MatrixXd& x);

// Per-sample log density of the mixture.
Eigen::VectorXd gmm_log_density(const GaussianMixture& mixture, const Eigen::MatrixXd& x);

// Moore-Penrose inverse of a symmetric matrix. Eigenvalues with magnitude
// below 1e-10 * max|eigenvalue| are treated as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& s);

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

// Column-wise z-scoring with divisor n. Zero-variance columns are dropped.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x);

}  // namespace xfer
