#include "nsql/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace nsql {

std::string to_string(LossKind kind)
{
    switch (kind) {
    case LossKind::l2:
        return "l2";
    case LossKind::l1:
        return "l1";
    case LossKind::ssim_l1:
        return "ssim_l1";
    }
    return "?";
}

LossKind parse_loss_kind(const std::string& name)
{
    if (name == "l2") {
        return LossKind::l2;
    }
    if (name == "l1") {
        return LossKind::l1;
    }
    if (name == "ssim_l1") {
        return LossKind::ssim_l1;
    }
    throw ConfigError("unknown loss '" + name + "' (expected l2, l1 or ssim_l1)");
}

namespace {

void check_window(const ImageShape& shape, int window)
{
    if (window < 1 || window % 2 == 0) {
        throw ShapeError("SSIM window must be a positive odd integer, got " + std::to_string(window));
    }
    if (shape.height < window || shape.width < window) {
        throw ShapeError("SSIM window " + std::to_string(window) + " larger than image " +
                         std::to_string(shape.height) + "x" + std::to_string(shape.width));
    }
    if (shape.channels < 1) {
        throw ShapeError("image needs at least one channel");
    }
}

// Box-window sums of a flat HWC image, laid out [channel][row][col] over the
// valid window positions. Plain sums in a fixed order, so equal inputs give
// bitwise-equal outputs.
void box_sums(const double* image, const ImageShape& shape, int window, std::vector<double>& out,
              std::vector<double>& scratch)
{
    const int wh = shape.height - window + 1;
    const int ww = shape.width - window + 1;
    const int c = shape.channels;
    out.assign(std::size_t(c) * std::size_t(wh) * std::size_t(ww), 0.0);
    scratch.assign(std::size_t(shape.height) * std::size_t(ww), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        for (int r = 0; r < shape.height; ++r) {
            for (int col = 0; col < ww; ++col) {
                double s = 0.0;
                for (int t = 0; t < window; ++t) {
                    s += image[(std::size_t(r) * std::size_t(shape.width) + std::size_t(col + t)) * std::size_t(c) +
                               std::size_t(ch)];
                }
                scratch[std::size_t(r) * std::size_t(ww) + std::size_t(col)] = s;
            }
        }
        double* dst = out.data() + std::size_t(ch) * std::size_t(wh) * std::size_t(ww);
        for (int r = 0; r < wh; ++r) {
            for (int col = 0; col < ww; ++col) {
                double s = 0.0;
                for (int t = 0; t < window; ++t) {
                    s += scratch[std::size_t(r + t) * std::size_t(ww) + std::size_t(col)];
                }
                dst[std::size_t(r) * std::size_t(ww) + std::size_t(col)] = s;
            }
        }
    }
}

struct ImageMoments {
    std::vector<double> sum;
    std::vector<double> sum_sq;
};

ImageMoments moments(const double* image, const ImageShape& shape, int window)
{
    ImageMoments m;
    std::vector<double> scratch;
    std::vector<double> squares(std::size_t(shape.size()));
    for (std::size_t k = 0; k < squares.size(); ++k) {
        squares[k] = image[k] * image[k];
    }
    box_sums(image, shape, window, m.sum, scratch);
    box_sums(squares.data(), shape, window, m.sum_sq, scratch);
    return m;
}

struct SsimConstants {
    double c1;
    double c2;
    double inv_n;
};

SsimConstants constants(int window, double data_range)
{
    return {(0.01 * data_range) * (0.01 * data_range), (0.03 * data_range) * (0.03 * data_range),
            1.0 / double(window * window)};
}

double window_ssim(double sx, double sy, double sxx, double syy, double sxy, const SsimConstants& k)
{
    const double mx = sx * k.inv_n;
    const double my = sy * k.inv_n;
    const double vx = sxx * k.inv_n - mx * mx;
    const double vy = syy * k.inv_n - my * my;
    const double cxy = sxy * k.inv_n - mx * my;
    return ((2.0 * mx * my + k.c1) * (2.0 * cxy + k.c2)) / ((mx * mx + my * my + k.c1) * (vx + vy + k.c2));
}

struct MomentsView {
    const double* sum;
    const double* sum_sq;
};

MomentsView view(const ImageMoments& m)
{
    return {m.sum.data(), m.sum_sq.data()};
}

double ssim_from_moments(const double* x, MomentsView mx, const double* y, MomentsView my, const ImageShape& shape, int window, double data_range, std::vector<double>& product,
                         std::vector<double>& cross, std::vector<double>& scratch)
{
    const auto p = std::size_t(shape.size());
    product.resize(p);
    for (std::size_t k = 0; k < p; ++k) {
        product[k] = x[k] * y[k];
    }
    box_sums(product.data(), shape, window, cross, scratch);
    const SsimConstants k = constants(window, data_range);
    double total = 0.0;
    for (std::size_t w = 0; w < cross.size(); ++w) {
        total += window_ssim(mx.sum[w], my.sum[w], mx.sum_sq[w], my.sum_sq[w], cross[w], k);
    }
    return total / double(cross.size());
}

double mean_abs_diff(const double* x, const double* y, std::size_t n)
{
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        s += std::abs(x[k] - y[k]);
    }
    return s / double(n);
}

double mean_sq_diff(const double* x, const double* y, std::size_t n)
{
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = x[k] - y[k];
        s += d * d;
    }
    return s / double(n);
}

void check_pair(VectorRef x, VectorRef y)
{
    if (x.size() != y.size()) {
        throw ShapeError("loss: length mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    }
    if (x.size() == 0) {
        throw ShapeError("loss: empty vectors");
    }
}

} // namespace

void LossSpec::validate(Index p) const
{
    if (!(data_range > 0.0)) {
        throw ConfigError("loss.data_range must be > 0");
    }
    if (kind == LossKind::ssim_l1) {
        if (!image_shape) {
            throw ConfigError("ssim_l1 loss needs an image shape");
        }
        check_window(*image_shape, window);
        if (image_shape->size() != p) {
            throw ShapeError("ssim_l1: image shape covers " + std::to_string(image_shape->size()) +
                             " values, samples have " + std::to_string(p));
        }
    }
}

double ssim(VectorRef x, VectorRef y, const ImageShape& shape, int window, double data_range)
{
    check_pair(x, y);
    check_window(shape, window);
    if (shape.size() != x.size()) {
        throw ShapeError("ssim: image shape does not match vector length");
    }
    const ImageMoments mx = moments(x.data(), shape, window);
    const ImageMoments my = moments(y.data(), shape, window);
    std::vector<double> product;
    std::vector<double> cross;
    std::vector<double> scratch;
    return ssim_from_moments(x.data(), view(mx), y.data(), view(my), shape, window, data_range, product, cross,
                             scratch);
}

Vector ssim_gradient(VectorRef x, VectorRef y, const ImageShape& shape, int window, double data_range)
{
    check_pair(x, y);
    check_window(shape, window);
    if (shape.size() != x.size()) {
        throw ShapeError("ssim_gradient: image shape does not match vector length");
    }
    const ImageMoments mx = moments(x.data(), shape, window);
    const ImageMoments my = moments(y.data(), shape, window);
    std::vector<double> product(std::size_t(x.size()));
    for (std::size_t k = 0; k < product.size(); ++k) {
        product[k] = x[Index(k)] * y[Index(k)];
    }
    std::vector<double> cross;
    std::vector<double> scratch;
    box_sums(product.data(), shape, window, cross, scratch);

    const SsimConstants kc = constants(window, data_range);
    const int wh = shape.height - window + 1;
    const int ww = shape.width - window + 1;
    const int channels = shape.channels;
    const double inv_windows = 1.0 / double(cross.size());

    // dS_w/dx_k = offset_w + slope_y_w * y_k + slope_x_w * x_k for pixels k in window w.
    Vector grad = Vector::Zero(x.size());
    for (int ch = 0; ch < channels; ++ch) {
        for (int r = 0; r < wh; ++r) {
            for (int c = 0; c < ww; ++c) {
                const std::size_t w = (std::size_t(ch) * std::size_t(wh) + std::size_t(r)) * std::size_t(ww) +
                                      std::size_t(c);
                const double mux = mx.sum[w] * kc.inv_n;
                const double muy = my.sum[w] * kc.inv_n;
                const double vx = mx.sum_sq[w] * kc.inv_n - mux * mux;
                const double vy = my.sum_sq[w] * kc.inv_n - muy * muy;
                const double cxy = cross[w] * kc.inv_n - mux * muy;
                const double a1 = 2.0 * mux * muy + kc.c1;
                const double a2 = 2.0 * cxy + kc.c2;
                const double b1 = mux * mux + muy * muy + kc.c1;
                const double b2 = vx + vy + kc.c2;
                const double s = (a1 * a2) / (b1 * b2);
                const double mean_term = s * (2.0 * muy / a1 - 2.0 * mux / b1) * kc.inv_n;
                const double slope_y = 2.0 * s / a2 * kc.inv_n;
                const double slope_x = -2.0 * s / b2 * kc.inv_n;
                const double offset = mean_term - slope_y * muy - slope_x * mux;
                for (int dr = 0; dr < window; ++dr) {
                    for (int dc = 0; dc < window; ++dc) {
                        const Index k = (Index(r + dr) * shape.width + (c + dc)) * channels + ch;
                        grad[k] += (offset + slope_y * y[k] + slope_x * x[k]) * inv_windows;
                    }
                }
            }
        }
    }
    return grad;
}

double loss(const LossSpec& spec, VectorRef x, VectorRef y)
{
    check_pair(x, y);
    const auto n = std::size_t(x.size());
    switch (spec.kind) {
    case LossKind::l2:
        return mean_sq_diff(x.data(), y.data(), n);
    case LossKind::l1:
        return mean_abs_diff(x.data(), y.data(), n);
    case LossKind::ssim_l1: {
        spec.validate(x.size());
        const double s = ssim(x, y, *spec.image_shape, spec.window, spec.data_range);
        return std::max(0.0, 0.5 * (1.0 - s) + 0.5 * mean_abs_diff(x.data(), y.data(), n));
    }
    }
    throw ConfigError("unknown loss kind");
}

Vector loss_gradient(const LossSpec& spec, VectorRef pred, VectorRef target)
{
    check_pair(pred, target);
    const double inv_p = 1.0 / double(pred.size());
    const Vector diff = pred - target;
    const Vector sign = diff.unaryExpr([](double d) { return double((d > 0.0) - (d < 0.0)); });
    switch (spec.kind) {
    case LossKind::l2:
        return 2.0 * inv_p * diff;
    case LossKind::l1:
        return inv_p * sign;
    case LossKind::ssim_l1:
        spec.validate(pred.size());
        return -0.5 * ssim_gradient(pred, target, *spec.image_shape, spec.window, spec.data_range) +
               0.5 * inv_p * sign;
    }
    throw ConfigError("unknown loss kind");
}

PairwiseLoss::PairwiseLoss(LossSpec spec, const RowMatrix& candidates)
    : spec_(std::move(spec)), candidates_(candidates)
{
    spec_.validate(candidates_.cols());
    if (spec_.kind == LossKind::ssim_l1) {
        sums_.resize(std::size_t(candidates_.rows()));
        squares_.resize(std::size_t(candidates_.rows()));
        for (Index k = 0; k < candidates_.rows(); ++k) {
            ImageMoments m = moments(candidates_.row(k).data(), *spec_.image_shape, spec_.window);
            sums_[std::size_t(k)] = std::move(m.sum);
            squares_[std::size_t(k)] = std::move(m.sum_sq);
        }
    }
}

void PairwiseLoss::row(VectorRef x, double* out) const
{
    if (x.size() != candidates_.cols()) {
        throw ShapeError("PairwiseLoss: sample width " + std::to_string(x.size()) + " != candidate width " +
                         std::to_string(candidates_.cols()));
    }
    const auto n = std::size_t(x.size());
    switch (spec_.kind) {
    case LossKind::l2:
        for (Index k = 0; k < candidates_.rows(); ++k) {
            out[k] = mean_sq_diff(x.data(), candidates_.row(k).data(), n);
        }
        return;
    case LossKind::l1:
        for (Index k = 0; k < candidates_.rows(); ++k) {
            out[k] = mean_abs_diff(x.data(), candidates_.row(k).data(), n);
        }
        return;
    case LossKind::ssim_l1: {
        const ImageShape& shape = *spec_.image_shape;
        const ImageMoments mx = moments(x.data(), shape, spec_.window);
        std::vector<double> product;
        std::vector<double> cross;
        std::vector<double> scratch;
        for (Index k = 0; k < candidates_.rows(); ++k) {
            const double* y = candidates_.row(k).data();
            const MomentsView my{sums_[std::size_t(k)].data(), squares_[std::size_t(k)].data()};
            const double s = ssim_from_moments(x.data(), view(mx), y, my, shape, spec_.window, spec_.data_range,
                                               product, cross, scratch);
            out[k] = std::max(0.0, 0.5 * (1.0 - s) + 0.5 * mean_abs_diff(x.data(), y, n));
        }
        return;
    }
    }
}

double PairwiseLoss::nearest(VectorRef x) const
{
    std::vector<double> values(std::size_t(candidates_.rows()));
    row(x, values.data());
    return *std::min_element(values.begin(), values.end());
}

FeatureExtractor make_feature_extractor(std::uint64_t seed, Index input_dim, Index feature_dim, Index hidden_dim)
{
    if (input_dim < 1 || feature_dim < 1 || hidden_dim < 1) {
        throw ShapeError("feature extractor dimensions must be positive");
    }
    Rng rng(seed);
    FeatureExtractor fe;
    fe.seed = seed;
    fe.w1.resize(hidden_dim, input_dim);
    fe.w2.resize(feature_dim, hidden_dim);
    const double s1 = std::sqrt(2.0 / double(input_dim));
    const double s2 = std::sqrt(2.0 / double(hidden_dim));
    for (Index r = 0; r < hidden_dim; ++r) {
        for (Index c = 0; c < input_dim; ++c) {
            fe.w1(r, c) = s1 * rng.normal();
        }
    }
    for (Index r = 0; r < feature_dim; ++r) {
        for (Index c = 0; c < hidden_dim; ++c) {
            fe.w2(r, c) = s2 * rng.normal();
        }
    }
    fe.b1 = Vector::Zero(hidden_dim);
    fe.b2 = Vector::Zero(feature_dim);
    return fe;
}

RowMatrix extract_features(const FeatureExtractor& fe, const RowMatrix& batch)
{
    if (batch.cols() != fe.input_dim()) {
        throw ShapeError("feature extractor expects width " + std::to_string(fe.input_dim()) + ", got " +
                         std::to_string(batch.cols()));
    }
    RowMatrix hidden = batch * fe.w1.transpose();
    hidden.rowwise() += fe.b1.transpose();
    hidden = hidden.cwiseMax(0.0);
    RowMatrix features = hidden * fe.w2.transpose();
    features.rowwise() += fe.b2.transpose();
    return features.cwiseMax(0.0);
}

GaussianFit fit_gaussian(const RowMatrix& samples)
{
    if (samples.rows() < 2) {
        throw InputError("Gaussian fit needs at least 2 samples");
    }
    GaussianFit fit;
    fit.mean = samples.colwise().mean().transpose();
    const RowMatrix centered = samples.rowwise() - fit.mean.transpose();
    fit.covariance = (centered.transpose() * centered) / double(samples.rows() - 1);
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
    return fit;
}

namespace {

Matrix psd_sqrt(const Matrix& m)
{
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed in matrix square root");
    }
    const Vector roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

} // namespace

double frechet_distance(const GaussianFit& a, const GaussianFit& b)
{
    if (a.mean.size() != b.mean.size() || a.covariance.rows() != a.mean.size() ||
        b.covariance.rows() != b.mean.size()) {
        throw ShapeError("frechet_distance: dimension mismatch");
    }
    const Matrix root_a = psd_sqrt(a.covariance);
    Matrix inner = root_a * b.covariance * root_a;
    inner = 0.5 * (inner + inner.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> solver(inner, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed in Frechet distance");
    }
    const double trace_root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double value = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() -
                         2.0 * trace_root;
    return std::max(0.0, value);
}

double proxy_fid(const RowMatrix& real, const RowMatrix& fake, const FeatureExtractor& fe,
                 const ProxyFidOptions& options)
{
    if (real.rows() < 2 || fake.rows() < 2) {
        throw InputError("proxy_fid needs at least 2 samples per set");
    }
    if (real.cols() != fake.cols()) {
        throw ShapeError("proxy_fid: real width " + std::to_string(real.cols()) + " != fake width " +
                         std::to_string(fake.cols()));
    }
    const Index count = std::min({real.rows(), fake.rows(), std::max<Index>(2, options.max_samples)});
    if (count < fe.feature_dim() + 1) {
        std::cerr << "warning: proxy_fid with " << count << " samples for " << fe.feature_dim()
                  << "-d features; covariance is rank deficient\n";
    }
    // Each set draws from its own copy of the stream, so equal-sized sets
    // keep the same rows.
    auto pick = [&](const RowMatrix& set) {
        if (set.rows() == count) {
            return set;
        }
        Rng rng(options.seed);
        auto idx = rng.sample_without_replacement(set.rows(), count);
        std::sort(idx.begin(), idx.end());
        RowMatrix out(count, set.cols());
        for (Index i = 0; i < count; ++i) {
            out.row(i) = set.row(idx[std::size_t(i)]);
        }
        return out;
    };
    const RowMatrix real_sub = pick(real);
    const RowMatrix fake_sub = pick(fake);
    return frechet_distance(fit_gaussian(extract_features(fe, real_sub)),
                            fit_gaussian(extract_features(fe, fake_sub)));
}

PairStats paired_stats(const RowMatrix& real, const RowMatrix& fake, const ImageShape& shape, Index max_pairs,
                       int window, double data_range)
{
    if (real.cols() != fake.cols()) {
        throw ShapeError("paired_stats: width mismatch");
    }
    PairStats stats;
    stats.n_pairs = std::min({real.rows(), fake.rows(), max_pairs});
    if (stats.n_pairs < 1) {
        throw InputError("paired_stats needs at least one pair");
    }
    std::vector<double> values;
    double l1 = 0.0;
    for (Index i = 0; i < stats.n_pairs; ++i) {
        const Vector x = real.row(i).transpose();
        const Vector y = fake.row(i).transpose();
        values.push_back(ssim(x, y, shape, window, data_range));
        l1 += (x - y).cwiseAbs().mean();
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= double(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    stats.ssim_mean = mean;
    stats.ssim_std = values.size() > 1 ? std::sqrt(var / double(values.size() - 1)) : 0.0;
    stats.l1_mean = l1 / double(stats.n_pairs);
    return stats;
}

} // namespace nsql
