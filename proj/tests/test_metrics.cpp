#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsql/metrics.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

using namespace nsql;

namespace {

// Window-by-window SSIM straight from the definition.
double reference_ssim(const Vector& x, const Vector& y, const ImageShape& s, int window, double range)
{
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const double count = double(window) * window;
    double total = 0.0;
    int windows = 0;
    for (int c = 0; c < s.channels; ++c) {
        for (int top = 0; top + window <= s.height; ++top) {
            for (int left = 0; left + window <= s.width; ++left) {
                double mx = 0.0;
                double my = 0.0;
                for (int r = top; r < top + window; ++r) {
                    for (int q = left; q < left + window; ++q) {
                        const Index at = (Index(r) * s.width + q) * s.channels + c;
                        mx += x(at);
                        my += y(at);
                    }
                }
                mx /= count;
                my /= count;
                double vx = 0.0;
                double vy = 0.0;
                double cov = 0.0;
                for (int r = top; r < top + window; ++r) {
                    for (int q = left; q < left + window; ++q) {
                        const Index at = (Index(r) * s.width + q) * s.channels + c;
                        vx += (x(at) - mx) * (x(at) - mx);
                        vy += (y(at) - my) * (y(at) - my);
                        cov += (x(at) - mx) * (y(at) - my);
                    }
                }
                vx /= count;
                vy /= count;
                cov /= count;
                total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        }
    }
    return total / windows;
}

Vector random_image(const ImageShape& s, std::uint64_t seed)
{
    return test::random_matrix(1, s.size(), seed).row(0).transpose();
}

Vector gradient_image(int h, int w, double ax, double ay, double offset)
{
    Vector v(h * w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            v(r * w + c) = offset + ax * c / double(w - 1) + ay * r / double(h - 1);
        }
    }
    return v;
}

} // namespace

TEST_CASE("loss examples")
{
    Vector zero = Vector::Zero(2);
    Vector one = Vector::Ones(2);
    LossSpec l1;
    l1.kind = LossKind::l1;
    CHECK(loss(l1, zero, one) == 1.0);
    LossSpec l2;
    CHECK(loss(l2, zero, 3.0 * one) == 9.0);

    LossSpec sl;
    sl.kind = LossKind::ssim_l1;
    sl.image_shape = ImageShape{8, 8, 1};
    const Vector x = random_image(*sl.image_shape, 1);
    CHECK(loss(sl, x, x) == 0.0);
    CHECK(loss(l1, x, x) == 0.0);
    CHECK(loss(l2, x, x) == 0.0);
}

TEST_CASE("ssim_l1 on gradient images matches the per-window oracle")
{
    LossSpec spec;
    spec.kind = LossKind::ssim_l1;
    spec.image_shape = ImageShape{8, 8, 1};
    const Vector x = gradient_image(8, 8, 0.8, 0.1, 0.05);
    const Vector y = gradient_image(8, 8, 0.2, 0.6, 0.1);
    const double expected = 0.5 * (1.0 - reference_ssim(x, y, *spec.image_shape, 7, 1.0)) +
                            0.5 * (x - y).cwiseAbs().mean();
    CHECK(loss(spec, x, y) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(loss(spec, x, y) > 0.0);
}

TEST_CASE("loss spec errors")
{
    LossSpec spec;
    spec.kind = LossKind::ssim_l1;
    const Vector x = Vector::Zero(64);
    CHECK_THROWS_AS(loss(spec, x, x), ConfigError);
    spec.image_shape = ImageShape{4, 4, 1};
    CHECK_THROWS_AS(loss(spec, x, x), ShapeError);
    spec.image_shape = ImageShape{8, 7, 1};
    CHECK_THROWS_AS(loss(spec, x, x), ShapeError);
    spec.image_shape = ImageShape{8, 8, 1};
    spec.data_range = 0.0;
    CHECK_THROWS_AS(loss(spec, x, x), ConfigError);
    LossSpec l2;
    CHECK_THROWS_AS(loss(l2, Vector(Vector::Zero(3)), Vector(Vector::Zero(4))), ShapeError);
}

TEST_CASE("ssim of an image with itself is exactly one")
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const ImageShape s{9 + int(seed % 5), 7 + int(seed % 3), 1 + int(seed % 3)};
        const Vector x = random_image(s, seed);
        CHECK(ssim(x, x, s) == 1.0);
    }
}

TEST_CASE("ssim of constant images")
{
    const ImageShape s{7, 7, 1};
    const double c1 = 1e-4;
    for (auto [a, b] : {std::pair{0.2, 0.7}, std::pair{0.0, 1.0}, std::pair{0.5, 0.5}, std::pair{0.9, 0.1}}) {
        const Vector x = Vector::Constant(49, a);
        const Vector y = Vector::Constant(49, b);
        CHECK(ssim(x, y, s) == doctest::Approx((2 * a * b + c1) / (a * a + b * b + c1)).epsilon(1e-12));
    }
}

TEST_CASE("ssim matches the window-by-window oracle")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ImageShape s{12 + int(seed % 4), 10 + int(seed % 5), seed % 4 == 0 ? 3 : 1};
        const Vector x = random_image(s, 2 * seed);
        const Vector y = random_image(s, 2 * seed + 1);
        for (int window : {3, 7}) {
            CHECK(std::abs(ssim(x, y, s, window) - reference_ssim(x, y, s, window, 1.0)) <= 1e-9);
        }
    }
    const ImageShape s{16, 16, 1};
    const Vector x = random_image(s, 100);
    const Vector y = (0.6 * x + 0.4 * random_image(s, 101)).eval();
    CHECK(std::abs(ssim(x, y, s, 7, 2.0) - reference_ssim(x, y, s, 7, 2.0)) <= 1e-9);
}

TEST_CASE("ssim symmetry and range")
{
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const ImageShape s{8, 8, 1};
        const Vector x = random_image(s, seed);
        Vector y = random_image(s, seed + 5000);
        if (seed % 3 == 0) {
            y = Vector::Ones(64) - x; // anti-correlated
        }
        const double xy = ssim(x, y, s);
        CHECK(xy == ssim(y, x, s));
        CHECK(xy >= -1.0);
        CHECK(xy <= 1.0 + 1e-12);
    }
}

TEST_CASE("ssim errors")
{
    const ImageShape s{5, 5, 1};
    const Vector x = Vector::Zero(25);
    CHECK_THROWS(ssim(x, x, s, 7));
    CHECK_THROWS(ssim(x, x, s, 4));
    CHECK_THROWS(ssim(x, Vector(Vector::Zero(24)), s, 3));
}

TEST_CASE("loss and ssim gradients match finite differences")
{
    const ImageShape s{9, 8, 1};
    const Vector y = random_image(s, 3);
    const Vector x = random_image(s, 4);
    const double h = 1e-6;
    const Vector g = ssim_gradient(x, y, s, 5);
    for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x;
        Vector xm = x;
        xp(i) += h;
        xm(i) -= h;
        CHECK(g(i) == doctest::Approx((ssim(xp, y, s, 5) - ssim(xm, y, s, 5)) / (2 * h)).epsilon(1e-5));
    }
    for (auto kind : {LossKind::l2, LossKind::l1, LossKind::ssim_l1}) {
        LossSpec spec;
        spec.kind = kind;
        spec.image_shape = s;
        const Vector lg = loss_gradient(spec, x, y);
        for (Index i = 0; i < x.size(); ++i) {
            Vector xp = x;
            Vector xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double numeric = (loss(spec, xp, y) - loss(spec, xm, y)) / (2 * h);
            CHECK(lg(i) == doctest::Approx(numeric).epsilon(1e-5));
        }
    }
}

TEST_CASE("loss is nonnegative and vanishes only on equality for l1 and l2")
{
    Rng rng(8);
    for (int t = 0; t < 200; ++t) {
        const ImageShape s{7, 7, 1};
        const Vector x = random_image(s, rng.next_u64());
        Vector y = x;
        y(Index(rng.below(49))) += 1e-3;
        for (auto kind : {LossKind::l2, LossKind::l1, LossKind::ssim_l1}) {
            LossSpec spec;
            spec.kind = kind;
            spec.image_shape = s;
            CHECK(loss(spec, x, y) >= 0.0);
            if (kind != LossKind::ssim_l1) {
                CHECK(loss(spec, x, y) > 0.0);
            }
        }
    }
}

TEST_CASE("pairwise loss is bitwise equal to loss")
{
    for (auto kind : {LossKind::l2, LossKind::l1, LossKind::ssim_l1}) {
        LossSpec spec;
        spec.kind = kind;
        spec.image_shape = ImageShape{10, 9, 2};
        const RowMatrix candidates = test::random_matrix(6, 180, 1);
        const RowMatrix xs = test::random_matrix(4, 180, 2);
        const PairwiseLoss pl(spec, candidates);
        std::vector<double> out(6);
        for (Index i = 0; i < 4; ++i) {
            pl.row(xs.row(i).transpose(), out.data());
            double best = std::numeric_limits<double>::infinity();
            for (Index k = 0; k < 6; ++k) {
                const double direct = loss(spec, xs.row(i).transpose(), candidates.row(k).transpose());
                CHECK(out[std::size_t(k)] == direct);
                best = std::min(best, direct);
            }
            CHECK(pl.nearest(xs.row(i).transpose()) == best);
        }
    }
}

TEST_CASE("feature extractor")
{
    const FeatureExtractor fe = make_feature_extractor(3, 4, 4, 8);
    CHECK(fe.w1.rows() == 8);
    CHECK(fe.w1.cols() == 4);
    CHECK(fe.w2.rows() == 4);
    CHECK(fe.w2.cols() == 8);

    RowMatrix x(2, 4);
    x << 0.0, 0.0, 0.0, 0.0, 0.3, -0.2, 0.9, 0.4;
    const RowMatrix f = extract_features(fe, x);
    CHECK(f.row(0).isZero(0.0));

    double hidden[8];
    for (int j = 0; j < 8; ++j) {
        double s = fe.b1(j);
        for (int i = 0; i < 4; ++i) {
            s += fe.w1(j, i) * x(1, i);
        }
        hidden[j] = std::max(0.0, s);
    }
    for (int k = 0; k < 4; ++k) {
        double s = fe.b2(k);
        for (int j = 0; j < 8; ++j) {
            s += fe.w2(k, j) * hidden[j];
        }
        CHECK(f(1, k) == doctest::Approx(std::max(0.0, s)).epsilon(1e-14));
    }

    CHECK(extract_features(fe, x) == f);
    const FeatureExtractor again = make_feature_extractor(3, 4, 4, 8);
    CHECK(again.w1 == fe.w1);
    CHECK(again.w2 == fe.w2);
    CHECK_FALSE(make_feature_extractor(4, 4, 4, 8).w1 == fe.w1);
    CHECK_THROWS_AS(extract_features(fe, RowMatrix::Zero(1, 5)), ShapeError);
}

TEST_CASE("frechet distance examples")
{
    GaussianFit a{Vector::Zero(1), Matrix::Zero(1, 1)};
    GaussianFit b{Vector::Constant(1, 3.0), Matrix::Zero(1, 1)};
    CHECK(frechet_distance(a, b) == doctest::Approx(9.0).epsilon(1e-14));
    CHECK(frechet_distance(a, a) <= 1e-8);

    GaussianFit c{Vector::Zero(1), Matrix::Constant(1, 1, 1.0)};
    GaussianFit d{Vector::Zero(1), Matrix::Constant(1, 1, 4.0)};
    CHECK(frechet_distance(c, d) == doctest::Approx(1.0).epsilon(1e-14));

    const RowMatrix cloud = test::random_matrix(50, 5, 2);
    const auto fit = fit_gaussian(cloud);
    CHECK(frechet_distance(fit, fit) <= 1e-8);
    CHECK((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10);

    CHECK_THROWS_AS(fit_gaussian(RowMatrix::Zero(1, 3)), InputError);
    CHECK_THROWS_AS(frechet_distance(a, fit), ShapeError);
}

TEST_CASE("proxy fid: identities")
{
    const RowMatrix x = test::random_matrix(300, 20, 1);
    const FeatureExtractor fe = make_feature_extractor(0, 20, 16, 32);
    CHECK(proxy_fid(x, x, fe) <= 1e-6);

    const auto perm = Rng(2).permutation(300);
    RowMatrix shuffled(300, 20);
    for (Index i = 0; i < 300; ++i) {
        shuffled.row(i) = x.row(perm[std::size_t(i)]);
    }
    CHECK(proxy_fid(x, shuffled, fe) <= 1e-6);
    CHECK(proxy_fid(x, test::random_matrix(300, 20, 9), fe) >= 0.0);
    CHECK(proxy_fid(x, x, fe, {100, 5}) <= 1e-6);
    CHECK_THROWS_AS(proxy_fid(x.topRows(1), x, fe), InputError);
    CHECK_THROWS_AS(proxy_fid(x, RowMatrix::Zero(10, 21), fe), ShapeError);
}

TEST_CASE("proxy fid matches an independent moments pipeline")
{
    const Index n = 400;
    const Index p = 6;
    Rng rng(21);
    RowMatrix real(n, p);
    RowMatrix fake(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < p; ++k) {
            real(i, k) = rng.normal();
            fake(i, k) = rng.normal() + 1.0;
        }
    }
    const FeatureExtractor fe = make_feature_extractor(7, p, 8, 16);
    const double got = proxy_fid(real, fake, fe);

    auto features = [&](const RowMatrix& x) {
        Matrix f(n, 8);
        for (Index i = 0; i < n; ++i) {
            for (Index k = 0; k < 8; ++k) {
                double acc = fe.b2(k);
                for (Index j = 0; j < 16; ++j) {
                    double h = fe.b1(j);
                    for (Index c = 0; c < p; ++c) {
                        h += fe.w1(j, c) * x(i, c);
                    }
                    acc += fe.w2(k, j) * std::max(0.0, h);
                }
                f(i, k) = std::max(0.0, acc);
            }
        }
        return f;
    };
    auto moments = [&](const Matrix& f, Vector& mean, Matrix& cov) {
        mean = Vector::Zero(8);
        for (Index i = 0; i < n; ++i) {
            mean += f.row(i).transpose();
        }
        mean /= double(n);
        cov = Matrix::Zero(8, 8);
        for (Index i = 0; i < n; ++i) {
            const Vector c = f.row(i).transpose() - mean;
            cov += c * c.transpose();
        }
        cov /= double(n - 1);
    };
    Vector ma;
    Vector mb;
    Matrix sa;
    Matrix sb;
    moments(features(real), ma, sa);
    moments(features(fake), mb, sb);
    // Tr((Sa Sb)^1/2) from the eigenvalues of the non-symmetric product.
    Eigen::EigenSolver<Matrix> es(sa * sb);
    double trace_root = 0.0;
    for (Index i = 0; i < 8; ++i) {
        trace_root += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
    }
    const double expected = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * trace_root;
    CHECK(expected > 0.1);
    CHECK(got == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("paired stats")
{
    const ImageShape s{8, 8, 1};
    const RowMatrix a = test::random_matrix(80, 64, 1);
    const auto same = paired_stats(a, a, s);
    CHECK(same.n_pairs == 50);
    CHECK(same.ssim_mean == 1.0);
    CHECK(same.ssim_std == 0.0);
    CHECK(same.l1_mean == 0.0);

    const RowMatrix b = test::random_matrix(10, 64, 2);
    const auto few = paired_stats(a, b, s);
    CHECK(few.n_pairs == 10);
    double mean = 0.0;
    for (Index i = 0; i < 10; ++i) {
        mean += reference_ssim(a.row(i).transpose(), b.row(i).transpose(), s, 7, 1.0);
    }
    CHECK(few.ssim_mean == doctest::Approx(mean / 10.0).epsilon(1e-12));
}

TEST_CASE("loss kind names")
{
    for (auto k : {LossKind::l2, LossKind::l1, LossKind::ssim_l1}) {
        CHECK(parse_loss_kind(to_string(k)) == k);
    }
    CHECK_THROWS_AS(parse_loss_kind("lpips"), ConfigError);
}
