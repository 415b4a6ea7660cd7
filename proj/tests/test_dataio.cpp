#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsql/dataio.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nsql;

namespace {

std::vector<unsigned char> be32(std::uint32_t v)
{
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t count, std::uint32_t rows,
                                      std::uint32_t cols, const std::vector<unsigned char>& pixels)
{
    std::vector<unsigned char> out;
    for (auto v : {magic, count, rows, cols}) {
        const auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels)
{
    std::vector<unsigned char> out = be32(0x00000801);
    const auto n = be32(std::uint32_t(labels.size()));
    out.insert(out.end(), n.begin(), n.end());
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

Dataset image_dataset(const RowMatrix& samples, ImageShape shape)
{
    Dataset ds;
    ds.samples = samples;
    ds.image_shape = shape;
    return ds;
}

const std::filesystem::path mnist_dir{NSQL_MNIST_DIR};

} // namespace

TEST_CASE("read_idx: hand-built fixture")
{
    test::TempDir dir("idx");
    test::write_bytes(dir / "img", idx_images(0x00000803, 1, 2, 2, {0, 255, 128, 64}));
    test::write_bytes(dir / "lbl", idx_labels({7}));
    const Dataset ds = read_idx(dir / "img", dir / "lbl");
    REQUIRE(ds.size() == 1);
    CHECK(ds.dim() == 4);
    CHECK(ds.samples(0, 0) == 0.0);
    CHECK(ds.samples(0, 1) == 1.0);
    CHECK(ds.samples(0, 2) == 128.0 / 255.0);
    CHECK(ds.samples(0, 3) == 64.0 / 255.0);
    CHECK(std::abs(ds.samples(0, 2) - 0.50196) < 1e-5);
    CHECK(std::abs(ds.samples(0, 3) - 0.25098) < 1e-5);
    CHECK(ds.image_shape == ImageShape{2, 2, 1});
    REQUIRE(ds.labels.has_value());
    CHECK(*ds.labels == std::vector<int>{7});
}

TEST_CASE("read_idx: row-major pixel order")
{
    test::TempDir dir("idx_order");
    test::write_bytes(dir / "img", idx_images(0x00000803, 2, 2, 3, {0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15}));
    const Dataset ds = read_idx(dir / "img");
    CHECK(ds.image_shape == ImageShape{2, 3, 1});
    CHECK(ds.samples(0, 5) == 5.0 / 255.0);
    CHECK(ds.samples(1, 0) == 10.0 / 255.0);
    CHECK_FALSE(ds.labels.has_value());
}

TEST_CASE("read_idx: errors")
{
    test::TempDir dir("idx_err");
    test::write_bytes(dir / "zero", idx_images(0x00000000, 1, 2, 2, {0, 0, 0, 0}));
    CHECK_THROWS_WITH_AS(read_idx(dir / "zero"), doctest::Contains("0x00000000"), FormatError);

    test::write_bytes(dir / "short", idx_images(0x00000803, 2, 2, 2, {0, 0, 0, 0, 0, 0, 0}));
    CHECK_THROWS_AS(read_idx(dir / "short"), LengthError);

    test::write_bytes(dir / "img", idx_images(0x00000803, 1, 2, 2, {0, 0, 0, 0}));
    test::write_bytes(dir / "two", idx_labels({1, 2}));
    CHECK_THROWS_AS(read_idx(dir / "img", dir / "two"), ShapeError);
    test::write_bytes(dir / "badlbl", idx_images(0x00000803, 1, 2, 2, {0, 0, 0, 0}));
    CHECK_THROWS_AS(read_idx(dir / "img", dir / "badlbl"), FormatError);
    CHECK_THROWS_AS(read_idx(dir / "missing"), FormatError);
}

TEST_CASE("read_idx: MNIST subset")
{
    const auto images = mnist_dir / "train-images-idx3-ubyte";
    if (!std::filesystem::exists(images)) {
        MESSAGE("MNIST files not present; skipped");
        return;
    }
    const Dataset ds = read_idx(images, mnist_dir / "train-labels-idx1-ubyte");
    CHECK(ds.image_shape == ImageShape{28, 28, 1});
    CHECK(ds.dim() == 784);
    CHECK(ds.size() == Index(ds.labels->size()));
    CHECK(ds.samples.minCoeff() >= 0.0);
    CHECK(ds.samples.maxCoeff() <= 1.0);
    for (int label : *ds.labels) {
        CHECK(label >= 0);
        CHECK(label <= 9);
    }
}

TEST_CASE("downsample examples")
{
    RowMatrix x(1, 4);
    x << 0, 0, 1, 1;
    const Dataset ds = image_dataset(x, {2, 2, 1});
    CHECK(downsample(ds, 1).samples == x);
    const Dataset small = downsample(ds, 2);
    CHECK(small.image_shape == ImageShape{1, 1, 1});
    CHECK(small.samples(0, 0) == 0.5);

    // Channels are averaged separately.
    RowMatrix rgb(1, 12);
    rgb << 0, 1, 0.5, 0, 1, 0.5, 0, 1, 0.5, 0, 1, 0.25;
    const Dataset c = downsample(image_dataset(rgb, {2, 2, 3}), 2);
    CHECK(c.samples(0, 0) == 0.0);
    CHECK(c.samples(0, 1) == 1.0);
    CHECK(c.samples(0, 2) == doctest::Approx(0.4375));

    CHECK_THROWS_AS(downsample(image_dataset(RowMatrix::Zero(1, 9), {3, 3, 1}), 2), ShapeError);
    Dataset plain;
    plain.samples = RowMatrix::Zero(1, 4);
    CHECK_THROWS_AS(downsample(plain, 2), ShapeError);
}

TEST_CASE("downsample MNIST digits pixelwise")
{
    const auto images = mnist_dir / "train-images-idx3-ubyte";
    if (!std::filesystem::exists(images)) {
        MESSAGE("MNIST files not present; skipped");
        return;
    }
    const Dataset ds = head(read_idx(images), 20);
    const Dataset small = downsample(ds, 2);
    CHECK(small.image_shape == ImageShape{14, 14, 1});
    for (Index n = 0; n < ds.size(); ++n) {
        for (int r = 0; r < 14; ++r) {
            for (int c = 0; c < 14; ++c) {
                const double expected = (ds.samples(n, (2 * r) * 28 + 2 * c) + ds.samples(n, (2 * r) * 28 + 2 * c + 1) +
                                         ds.samples(n, (2 * r + 1) * 28 + 2 * c) +
                                         ds.samples(n, (2 * r + 1) * 28 + 2 * c + 1)) /
                                        4.0;
                CHECK(small.samples(n, r * 14 + c) == doctest::Approx(expected).epsilon(1e-15));
            }
        }
    }
    CHECK(small.samples.minCoeff() >= 0.0);
    CHECK(small.samples.maxCoeff() <= 1.0);
}

TEST_CASE("synthetic: noiseless linear data")
{
    SyntheticSpec spec;
    spec.noise_sigma = 0.0;
    spec.n = 100;
    const auto s = make_synthetic(spec);
    CHECK(s.dataset.samples == RowMatrix(s.latents * s.mixing));
    CHECK(s.latents.minCoeff() > 0.0);
    CHECK(s.latents.maxCoeff() < 1.0);
    CHECK((s.mixing * s.mixing.transpose() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("synthetic: determinism")
{
    for (auto kind : {SyntheticKind::linear, SyntheticKind::mlp_fixed_seed}) {
        SyntheticSpec spec;
        spec.kind = kind;
        spec.seed = 5;
        const auto a = make_synthetic(spec);
        const auto b = make_synthetic(spec);
        CHECK(a.dataset.samples == b.dataset.samples);
        CHECK(a.latents == b.latents);
        spec.seed = 6;
        CHECK_FALSE(make_synthetic(spec).latents == a.latents);
    }
}

TEST_CASE("synthetic: noise variance")
{
    SyntheticSpec spec;
    spec.noise_sigma = 0.01;
    spec.n = 512;
    const auto s = make_synthetic(spec);
    const RowMatrix residual = s.dataset.samples - s.latents * s.mixing;
    for (Index k = 0; k < 16; ++k) {
        const double mean = residual.col(k).mean();
        const double var = (residual.col(k).array() - mean).square().sum() / double(spec.n - 1);
        CHECK(std::abs(var / 1e-4 - 1.0) <= 0.3);
    }
}

TEST_CASE("synthetic: validation")
{
    SyntheticSpec spec;
    spec.latent_dim = 5;
    spec.ambient_dim = 4;
    CHECK_THROWS_AS(make_synthetic(spec), ConfigError);
    spec = {};
    spec.noise_sigma = -1.0;
    CHECK_THROWS_AS(make_synthetic(spec), ConfigError);
}

TEST_CASE("container round trips bit exactly")
{
    test::TempDir dir("container");
    RowMatrix one(1, 1);
    one << 0.0;
    write_container(dir / "one.nsqt", one);
    const Container a = read_container(dir / "one.nsqt");
    CHECK(a.values == one);
    CHECK(a.dims == std::vector<std::uint32_t>{1, 1});

    const RowMatrix m = test::random_matrix(3, 4, 12, 1e3);
    write_container(dir / "m.nsqt", m);
    CHECK(read_container(dir / "m.nsqt").values == m);

    const RowMatrix imgs = test::random_matrix(2, 12, 3);
    write_container(dir / "img.nsqt", imgs, {2, 2, 3, 2});
    const Container c = read_container(dir / "img.nsqt");
    CHECK(c.dims == std::vector<std::uint32_t>{2, 2, 3, 2});
    CHECK(c.values == imgs);

    const auto bytes = test::read_bytes(dir / "m.nsqt");
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "NSQT");
    CHECK(bytes.size() == 4 + 4 + 4 + 2 * 4 + 12 * 8);
}

TEST_CASE("container errors")
{
    test::TempDir dir("container_err");
    write_container(dir / "m.nsqt", test::random_matrix(3, 4, 1));
    auto bytes = test::read_bytes(dir / "m.nsqt");

    auto cut = bytes;
    cut.pop_back();
    test::write_bytes(dir / "cut.nsqt", cut);
    CHECK_THROWS_AS(read_container(dir / "cut.nsqt"), LengthError);

    auto bad = bytes;
    bad[3] = 'X';
    test::write_bytes(dir / "bad.nsqt", bad);
    CHECK_THROWS_AS(read_container(dir / "bad.nsqt"), FormatError);

    auto version = bytes;
    version[4] = 9;
    test::write_bytes(dir / "ver.nsqt", version);
    CHECK_THROWS_WITH_AS(read_container(dir / "ver.nsqt"), doctest::Contains("version"), FormatError);

    CHECK_THROWS_AS(write_container(dir / "x.nsqt", test::random_matrix(2, 2, 0), {3}), ShapeError);
    RowMatrix nan = RowMatrix::Zero(1, 1);
    nan(0, 0) = std::nan("");
    CHECK_THROWS_AS(write_container(dir / "x.nsqt", nan), NumericError);
}

TEST_CASE("csv round trip")
{
    test::TempDir dir("csv");
    const RowMatrix m = test::random_matrix(5, 3, 8, 100.0);
    write_csv(dir / "m.csv", {"a", "b", "c"}, m);
    CHECK(read_csv(dir / "m.csv") == m);
    CHECK(test::read_text(dir / "m.csv").rfind("a,b,c\n", 0) == 0);

    std::ofstream(dir / "ragged.csv") << "a,b\n1,2\n3\n";
    CHECK_THROWS_AS(read_csv(dir / "ragged.csv"), FormatError);
    std::ofstream(dir / "text.csv") << "a,b\n1,x\n";
    CHECK_THROWS_AS(read_csv(dir / "text.csv"), FormatError);
    CHECK_THROWS_AS(write_csv(dir / "bad.csv", {"a"}, m), ShapeError);
}

TEST_CASE("load_dataset dispatch")
{
    test::TempDir dir("load");
    const RowMatrix m = test::random_matrix(4, 3, 2);
    write_csv(dir / "d.csv", {"x", "y", "z"}, m);
    write_container(dir / "d.nsqt", m);
    CHECK(load_dataset(dir / "d.csv").samples == m);
    CHECK(load_dataset(dir / "d.nsqt").samples == m);
    CHECK(load_dataset(dir / "d.nsqt", "container").samples == m);
    CHECK_THROWS_AS(load_dataset(dir / "d.csv", "parquet"), ConfigError);

    write_container(dir / "img.nsqt", test::random_matrix(2, 8, 1), sample_dims(2, 8, ImageShape{2, 2, 2}));
    const Dataset img = load_dataset(dir / "img.nsqt");
    CHECK(img.image_shape == ImageShape{2, 2, 2});
}

TEST_CASE("split_validation")
{
    Dataset ds;
    ds.samples = test::random_matrix(50, 2, 1);
    ds.labels = std::vector<int>(50);
    for (int i = 0; i < 50; ++i) {
        (*ds.labels)[std::size_t(i)] = i;
    }
    const Split a = split_validation(ds, 0.1, 3);
    const Split b = split_validation(ds, 0.1, 3);
    CHECK(a.train.size() == 45);
    CHECK(a.validation.size() == 5);
    CHECK(a.train_indices == b.train_indices);
    CHECK(std::is_sorted(a.train_indices.begin(), a.train_indices.end()));
    CHECK(a.train.labels->size() == 45);
    CHECK(split_validation(ds, 0.0, 3).train.size() == 50);
    CHECK_THROWS_AS(split_validation(ds, 1.0, 3), ConfigError);
}

TEST_CASE("dataset validation")
{
    Dataset ds;
    CHECK_THROWS_AS(ds.validate(), InputError);
    ds.samples = RowMatrix::Constant(2, 4, 2.0);
    ds.image_shape = ImageShape{2, 2, 1};
    CHECK_THROWS_AS(ds.validate(), InputError);
    ds.samples = RowMatrix::Constant(2, 4, 0.5);
    ds.labels = std::vector<int>{1};
    CHECK_THROWS_AS(ds.validate(), ShapeError);
}

TEST_CASE("pgm grid")
{
    test::TempDir dir("pgm");
    write_pgm_grid(dir / "g.pgm", test::random_matrix(10, 6, 1), {2, 3, 1}, 4);
    const std::string text = test::read_text(dir / "g.pgm");
    CHECK(text.rfind("P5", 0) == 0);
}
