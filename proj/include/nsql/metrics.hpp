#pragma once

// Reconstruction losses, SSIM, and the proxy-FID evaluation metric.

#include "nsql/core.hpp"

#include <optional>
#include <string>

namespace nsql {

using VectorRef = Eigen::Ref<const Vector>;

enum class LossKind { l2, l1, ssim_l1 };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossSpec {
    LossKind kind = LossKind::l2;
    std::optional<ImageShape> image_shape; // required for ssim_l1
    int window = 7;
    double data_range = 1.0;

    /// Checks the spec against a sample width p.
    void validate(Index p) const;
};

/// l2: mean squared difference; l1: mean absolute difference;
/// ssim_l1: (1 - SSIM) / 2 + mean|x - y| / 2.
double loss(const LossSpec& spec, VectorRef x, VectorRef y);

/// Gradient of loss(spec, pred, target) with respect to pred.
Vector loss_gradient(const LossSpec& spec, VectorRef pred, VectorRef target);

/// Mean SSIM over all valid box windows (stride 1) and channels, with
/// C1 = (0.01 L)^2 and C2 = (0.03 L)^2. Images are flat HWC.
double ssim(VectorRef x, VectorRef y, const ImageShape& shape, int window = 7, double data_range = 1.0);

/// Gradient of ssim(x, y, ...) with respect to x.
Vector ssim_gradient(VectorRef x, VectorRef y, const ImageShape& shape, int window = 7, double data_range = 1.0);

/// loss(spec, x, candidates.row(k)) for many x against a fixed candidate
/// set. Per-candidate window statistics are computed once; results are
/// bitwise equal to loss().
class PairwiseLoss {
  public:
    PairwiseLoss(LossSpec spec, const RowMatrix& candidates);

    [[nodiscard]] Index size() const { return candidates_.rows(); }

    /// Fills out[k] = loss(x, candidate k) for every candidate.
    void row(VectorRef x, double* out) const;

    /// min_k loss(x, candidate k).
    [[nodiscard]] double nearest(VectorRef x) const;

  private:
    LossSpec spec_;
    RowMatrix candidates_;
    std::vector<std::vector<double>> sums_;    // per candidate window sums
    std::vector<std::vector<double>> squares_; // per candidate window sums of squares
};

struct FeatureExtractor {
    std::uint64_t seed = 0;
    Matrix w1; // hidden x input
    Vector b1;
    Matrix w2; // feature x hidden
    Vector b2;

    [[nodiscard]] Index input_dim() const { return w1.cols(); }
    [[nodiscard]] Index feature_dim() const { return w2.rows(); }
};

/// Fixed random two-stage affine + relu map. He-normal weights from the
/// seed, zero biases; never trained.
FeatureExtractor make_feature_extractor(std::uint64_t seed, Index input_dim, Index feature_dim = 128,
                                        Index hidden_dim = 256);

RowMatrix extract_features(const FeatureExtractor& fe, const RowMatrix& batch);

struct GaussianFit {
    Vector mean;
    Matrix covariance;
};

/// Sample mean and (n - 1)-normalized covariance of the rows.
GaussianFit fit_gaussian(const RowMatrix& samples);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), clamped at 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

struct ProxyFidOptions {
    Index max_samples = 2048;
    std::uint64_t seed = 0;
};

/// Frechet distance between Gaussian fits of real and fake features. Both
/// sets are subsampled (seeded, without replacement) to a common count.
double proxy_fid(const RowMatrix& real, const RowMatrix& fake, const FeatureExtractor& fe,
                 const ProxyFidOptions& options = {});

struct PairStats {
    double ssim_mean = 0.0;
    double ssim_std = 0.0;
    double l1_mean = 0.0;
    Index n_pairs = 0;
};

/// SSIM and L1 over the first min(max_pairs, rows) row pairs.
PairStats paired_stats(const RowMatrix& real, const RowMatrix& fake, const ImageShape& shape, Index max_pairs = 50,
                       int window = 7, double data_range = 1.0);

} // namespace nsql
