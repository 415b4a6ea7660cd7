#include "nsql/dataio.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nsql {

void Dataset::validate() const
{
    if (samples.rows() < 1) {
        throw InputError("dataset is empty");
    }
    if (labels && Index(labels->size()) != samples.rows()) {
        throw ShapeError("dataset has " + std::to_string(labels->size()) + " labels for " +
                         std::to_string(samples.rows()) + " samples");
    }
    if (image_shape) {
        if (image_shape->size() != samples.cols()) {
            throw ShapeError("image shape " + std::to_string(image_shape->height) + "x" +
                             std::to_string(image_shape->width) + "x" + std::to_string(image_shape->channels) +
                             " does not match sample width " + std::to_string(samples.cols()));
        }
        if (samples.size() > 0 && (samples.minCoeff() < 0.0 || samples.maxCoeff() > 1.0)) {
            throw InputError("image data must lie in [0, 1]");
        }
    }
    if (!samples.allFinite()) {
        throw InputError("dataset contains non-finite values");
    }
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& what)
{
    std::array<unsigned char, 4> b{};
    detail::read_exact(in, reinterpret_cast<char*>(b.data()), 4, what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

void expect_idx_magic(std::istream& in, std::uint32_t expected, const std::string& what)
{
    std::array<char, 4> magic{};
    detail::read_exact(in, magic.data(), 4, what);
    const auto* b = reinterpret_cast<const unsigned char*>(magic.data());
    const std::uint32_t value =
        (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
    if (value != expected) {
        std::ostringstream msg;
        msg << what << ": bad IDX magic " << detail::hex_bytes(magic) << " (expected 0x" << std::hex
            << std::setw(8) << std::setfill('0') << expected << ")";
        throw FormatError(msg.str());
    }
}

std::ifstream open_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return in;
}

} // namespace

Dataset read_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels)
{
    auto in = open_binary(images);
    const std::string what = "IDX images " + images.string();
    expect_idx_magic(in, 0x00000803, what);
    const std::uint32_t count = read_be_u32(in, what);
    const std::uint32_t rows = read_be_u32(in, what);
    const std::uint32_t cols = read_be_u32(in, what);
    const Index pixels = Index(rows) * cols;

    Dataset ds;
    ds.samples.resize(count, pixels);
    std::vector<unsigned char> buffer(static_cast<std::size_t>(pixels));
    for (std::uint32_t i = 0; i < count; ++i) {
        detail::read_exact(in, reinterpret_cast<char*>(buffer.data()), buffer.size(), what);
        for (Index k = 0; k < pixels; ++k) {
            ds.samples(i, k) = double(buffer[std::size_t(k)]) / 255.0;
        }
    }
    ds.image_shape = ImageShape{int(rows), int(cols), 1};
    ds.provenance = "idx:" + images.filename().string();

    if (labels) {
        auto lin = open_binary(*labels);
        const std::string lwhat = "IDX labels " + labels->string();
        expect_idx_magic(lin, 0x00000801, lwhat);
        const std::uint32_t lcount = read_be_u32(lin, lwhat);
        if (lcount != count) {
            throw ShapeError(lwhat + ": " + std::to_string(lcount) + " labels for " + std::to_string(count) +
                             " images");
        }
        std::vector<unsigned char> raw(lcount);
        detail::read_exact(lin, reinterpret_cast<char*>(raw.data()), raw.size(), lwhat);
        ds.labels = std::vector<int>(raw.begin(), raw.end());
    }
    ds.validate();
    return ds;
}

Dataset downsample(const Dataset& ds, int factor)
{
    if (!ds.image_shape) {
        throw ShapeError("downsample needs image-shaped data");
    }
    if (factor < 1) {
        throw ShapeError("downsample factor must be >= 1");
    }
    const ImageShape in = *ds.image_shape;
    if (in.height % factor != 0 || in.width % factor != 0) {
        throw ShapeError("image " + std::to_string(in.height) + "x" + std::to_string(in.width) +
                         " is not divisible by factor " + std::to_string(factor));
    }
    if (factor == 1) {
        return ds;
    }
    const ImageShape out{in.height / factor, in.width / factor, in.channels};
    Dataset result = ds;
    result.image_shape = out;
    result.samples.resize(ds.size(), out.size());
    const double scale = 1.0 / double(factor * factor);
    for (Index i = 0; i < ds.size(); ++i) {
        for (int r = 0; r < out.height; ++r) {
            for (int c = 0; c < out.width; ++c) {
                for (int ch = 0; ch < out.channels; ++ch) {
                    double sum = 0.0;
                    for (int dr = 0; dr < factor; ++dr) {
                        for (int dc = 0; dc < factor; ++dc) {
                            const Index src = (Index(r * factor + dr) * in.width + (c * factor + dc)) * in.channels + ch;
                            sum += ds.samples(i, src);
                        }
                    }
                    result.samples(i, (Index(r) * out.width + c) * out.channels + ch) = sum * scale;
                }
            }
        }
    }
    result.provenance = ds.provenance + "/down" + std::to_string(factor);
    return result;
}

Dataset take_rows(const Dataset& ds, const std::vector<Index>& indices)
{
    Dataset out;
    out.samples.resize(Index(indices.size()), ds.dim());
    if (ds.labels) {
        out.labels = std::vector<int>();
        out.labels->reserve(indices.size());
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const Index i = indices[k];
        if (i < 0 || i >= ds.size()) {
            throw InputError("row index " + std::to_string(i) + " out of range");
        }
        out.samples.row(Index(k)) = ds.samples.row(i);
        if (ds.labels) {
            out.labels->push_back((*ds.labels)[std::size_t(i)]);
        }
    }
    out.image_shape = ds.image_shape;
    out.provenance = ds.provenance;
    return out;
}

Dataset head(const Dataset& ds, Index count)
{
    if (count <= 0 || count >= ds.size()) {
        return ds;
    }
    std::vector<Index> idx(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        idx[std::size_t(i)] = i;
    }
    return take_rows(ds, idx);
}

Split split_validation(const Dataset& ds, double fraction, std::uint64_t seed)
{
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in [0, 1)");
    }
    const Index n = ds.size();
    const auto held = Index(std::llround(fraction * double(n)));
    std::vector<char> is_val(static_cast<std::size_t>(n), 0);
    if (held > 0) {
        Rng rng(seed);
        for (Index i : rng.sample_without_replacement(n, std::min(held, n - 1))) {
            is_val[std::size_t(i)] = 1;
        }
    }
    std::vector<Index> train_idx;
    std::vector<Index> val_idx;
    for (Index i = 0; i < n; ++i) {
        (is_val[std::size_t(i)] ? val_idx : train_idx).push_back(i);
    }
    Split split{take_rows(ds, train_idx), take_rows(ds, val_idx), train_idx};
    return split;
}

SyntheticData make_synthetic(const SyntheticSpec& spec)
{
    if (spec.latent_dim < 1 || spec.ambient_dim < spec.latent_dim) {
        throw ConfigError("synthetic spec needs 1 <= d <= p");
    }
    if (spec.n < 1) {
        throw ConfigError("synthetic spec needs n >= 1");
    }
    if (!(spec.noise_sigma >= 0.0)) {
        throw ConfigError("synthetic noise_sigma must be >= 0");
    }
    Rng rng(spec.seed);
    const Index d = spec.latent_dim;
    const Index p = spec.ambient_dim;
    constexpr Index hidden = 32;

    SyntheticData out;
    Matrix w1;
    Vector b1;
    Matrix w2;
    if (spec.kind == SyntheticKind::linear) {
        out.mixing.resize(d, p);
        for (Index r = 0; r < d; ++r) {
            for (Index c = 0; c < p; ++c) {
                out.mixing(r, c) = rng.normal();
            }
        }
        // Modified Gram-Schmidt: rows orthonormal, so Z -> Z A is an isometry.
        for (Index r = 0; r < d; ++r) {
            for (Index q = 0; q < r; ++q) {
                out.mixing.row(r) -= out.mixing.row(r).dot(out.mixing.row(q)) * out.mixing.row(q);
            }
            const double norm = out.mixing.row(r).norm();
            if (!(norm > 1e-12)) {
                throw NumericError("synthetic mixing matrix is rank deficient");
            }
            out.mixing.row(r) /= norm;
        }
    } else {
        w1.resize(hidden, d);
        b1.resize(hidden);
        w2.resize(p, hidden);
        for (Index r = 0; r < hidden; ++r) {
            for (Index c = 0; c < d; ++c) {
                w1(r, c) = 2.0 * rng.normal();
            }
            b1(r) = rng.normal();
        }
        for (Index r = 0; r < p; ++r) {
            for (Index c = 0; c < hidden; ++c) {
                w2(r, c) = rng.normal() / std::sqrt(double(hidden));
            }
        }
    }

    out.latents.resize(spec.n, d);
    for (Index i = 0; i < spec.n; ++i) {
        for (Index k = 0; k < d; ++k) {
            out.latents(i, k) = rng.uniform_open();
        }
    }

    RowMatrix clean;
    if (spec.kind == SyntheticKind::linear) {
        clean = out.latents * out.mixing;
    } else {
        RowMatrix h = out.latents * w1.transpose();
        h.rowwise() += b1.transpose();
        h = h.array().tanh().matrix();
        clean = h * w2.transpose();
    }
    if (spec.noise_sigma > 0.0) {
        for (Index i = 0; i < spec.n; ++i) {
            for (Index k = 0; k < p; ++k) {
                clean(i, k) += spec.noise_sigma * rng.normal();
            }
        }
    }
    out.dataset.samples = std::move(clean);
    out.dataset.provenance =
        std::string("synthetic:") + (spec.kind == SyntheticKind::linear ? "linear" : "mlp_fixed_seed");
    return out;
}

void write_container(const std::filesystem::path& path, const RowMatrix& values,
                     const std::vector<std::uint32_t>& dims)
{
    std::vector<std::uint32_t> shape = dims;
    if (shape.empty()) {
        shape = {std::uint32_t(values.rows()), std::uint32_t(values.cols())};
    }
    Index product = 1;
    for (auto d : shape) {
        product *= Index(d);
    }
    if (product != values.size()) {
        throw ShapeError("container dims describe " + std::to_string(product) + " values, matrix has " +
                         std::to_string(values.size()));
    }
    if (!values.allFinite()) {
        throw NumericError("container payload must be finite");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.write("NSQT", 4);
    detail::write_u32(out, container_version);
    detail::write_u32(out, std::uint32_t(shape.size()));
    for (auto d : shape) {
        detail::write_u32(out, d);
    }
    // RowMatrix storage is already row-major.
    out.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * sizeof(double)));
    if (!out) {
        throw Error("write failed: " + path.string());
    }
}

Container read_container(const std::filesystem::path& path)
{
    auto in = open_binary(path);
    const std::string what = "container " + path.string();
    std::array<char, 4> magic{};
    detail::read_exact(in, magic.data(), 4, what);
    if (std::string(magic.data(), 4) != "NSQT") {
        throw FormatError(what + ": bad magic " + detail::hex_bytes(magic));
    }
    const std::uint32_t version = detail::read_u32(in, what);
    if (version != container_version) {
        throw FormatError(what + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t rank = detail::read_u32(in, what);
    if (rank == 0 || rank > 8) {
        throw FormatError(what + ": unsupported rank " + std::to_string(rank));
    }
    Container c;
    Index inner = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
        c.dims.push_back(detail::read_u32(in, what));
        if (k > 0) {
            inner *= Index(c.dims.back());
        }
    }
    c.values.resize(Index(c.dims[0]), inner);
    detail::read_exact(in, reinterpret_cast<char*>(c.values.data()), std::size_t(c.values.size()) * sizeof(double),
                       what);
    detail::expect_eof(in, what);
    return c;
}

RowMatrix read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": missing header row");
    }
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::size_t start = 0;
        while (start <= line.size()) {
            const std::size_t end = std::min(line.find(',', start), line.size());
            double value = 0;
            const char* first = line.data() + start;
            const char* last = line.data() + end;
            while (first < last && *first == ' ') {
                ++first;
            }
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (ec != std::errc() || ptr != last) {
                throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field");
            }
            row.push_back(value);
            start = end + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw FormatError(path.string() + ": no data rows");
    }
    RowMatrix out(Index(rows.size()), Index(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < rows[i].size(); ++k) {
            out(Index(i), Index(k)) = rows[i][k];
        }
    }
    return out;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const RowMatrix& rows)
{
    if (Index(header.size()) != rows.cols()) {
        throw ShapeError("CSV header has " + std::to_string(header.size()) + " columns, data has " +
                         std::to_string(rows.cols()));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    for (std::size_t k = 0; k < header.size(); ++k) {
        out << (k ? "," : "") << header[k];
    }
    out << '\n';
    for (Index i = 0; i < rows.rows(); ++i) {
        for (Index k = 0; k < rows.cols(); ++k) {
            out << (k ? "," : "") << format_double(rows(i, k));
        }
        out << '\n';
    }
}

std::vector<std::uint32_t> sample_dims(Index n, Index p, const std::optional<ImageShape>& shape)
{
    if (shape && shape->size() == p) {
        return {std::uint32_t(n), std::uint32_t(shape->height), std::uint32_t(shape->width),
                std::uint32_t(shape->channels)};
    }
    return {std::uint32_t(n), std::uint32_t(p)};
}

Dataset load_dataset(const std::filesystem::path& path, const std::string& format,
                     const std::optional<std::filesystem::path>& labels)
{
    std::string kind = format;
    if (kind.empty()) {
        const std::string name = path.filename().string();
        const std::string ext = path.extension().string();
        if (ext == ".nsqt") {
            kind = "container";
        } else if (ext == ".csv") {
            kind = "csv";
        } else if (name.find("idx") != std::string::npos || ext == ".idx") {
            kind = "idx";
        } else {
            throw InputError("cannot infer dataset format of " + path.string() +
                             " (use .nsqt, .csv or an IDX file name)");
        }
    }
    Dataset ds;
    if (kind == "idx") {
        return read_idx(path, labels);
    }
    if (kind == "container") {
        const Container c = read_container(path);
        ds.samples = c.values;
        if (c.dims.size() == 4) {
            ds.image_shape = ImageShape{int(c.dims[1]), int(c.dims[2]), int(c.dims[3])};
        } else if (c.dims.size() == 3) {
            ds.image_shape = ImageShape{int(c.dims[1]), int(c.dims[2]), 1};
        }
    } else if (kind == "csv") {
        ds.samples = read_csv(path);
    } else {
        throw ConfigError("unknown dataset format '" + kind + "' (expected idx, container or csv)");
    }
    if (labels) {
        throw ConfigError("labels files are only supported for IDX datasets");
    }
    ds.provenance = kind + ":" + path.filename().string();
    ds.validate();
    return ds;
}

void write_pgm_grid(const std::filesystem::path& path, const RowMatrix& samples, const ImageShape& shape, int columns)
{
    if (shape.size() != samples.cols()) {
        throw ShapeError("PGM grid: image shape does not match sample width");
    }
    const Index n = samples.rows();
    const int cols = int(std::max<Index>(1, std::min<Index>(columns, n)));
    const int rows = int((n + cols - 1) / cols);
    const int width = cols * shape.width;
    const int height = rows * shape.height;
    std::vector<unsigned char> pixels(std::size_t(width) * std::size_t(height), 0);
    for (Index i = 0; i < n; ++i) {
        const int tile_r = int(i / cols);
        const int tile_c = int(i % cols);
        for (int r = 0; r < shape.height; ++r) {
            for (int c = 0; c < shape.width; ++c) {
                double v = 0.0;
                for (int ch = 0; ch < shape.channels; ++ch) {
                    v += samples(i, (Index(r) * shape.width + c) * shape.channels + ch);
                }
                v = std::clamp(v / shape.channels, 0.0, 1.0);
                const std::size_t y = std::size_t(tile_r * shape.height + r);
                const std::size_t x = std::size_t(tile_c * shape.width + c);
                pixels[y * std::size_t(width) + x] = static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
}

} // namespace nsql
