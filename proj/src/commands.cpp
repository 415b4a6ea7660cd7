#include "nsql/commands.hpp"

#include "nsql/assign.hpp"
#include "nsql/checkpoint.hpp"
#include "nsql/metrics.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace nsql {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const CapacityError*>(&e)) {
        return exit_config;
    }
    if (dynamic_cast<const NumericError*>(&e)) {
        return exit_numeric;
    }
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const LengthError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
        dynamic_cast<const fs::filesystem_error*>(&e)) {
        return exit_data;
    }
    return exit_failure;
}

namespace {

template <typename Body>
int guarded(const char* name, std::ostream& err, Body&& body)
{
    try {
        return body();
    } catch (const std::exception& e) {
        err << "nsql " << name << ": " << e.what() << '\n';
        return exit_code_for(e);
    }
}

std::optional<ImageShape> parse_shape_text(const std::string& text)
{
    std::vector<int> parts;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size() || v < 1) {
                throw std::invalid_argument(item);
            }
            parts.push_back(v);
        } catch (const std::logic_error&) {
            throw ConfigError("bad image shape '" + text + "' (expected h,w or h,w,c)");
        }
    }
    if (parts.size() < 2 || parts.size() > 3) {
        throw ConfigError("bad image shape '" + text + "' (expected h,w or h,w,c)");
    }
    return ImageShape{parts[0], parts[1], parts.size() == 3 ? parts[2] : 1};
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw InputError("cannot write " + path.string());
    }
    file << text;
    if (!file) {
        throw InputError("write failed for " + path.string());
    }
}

struct RunData {
    Dataset full;
    Split split;
};

RunData prepare_data(const RunConfig& config)
{
    RunData run;
    run.full = load_run_data(config.data);
    if (config.data.validation_fraction > 0.0) {
        run.split = split_validation(run.full, config.data.validation_fraction, config.data.split_seed);
    } else {
        run.split.train = run.full;
        run.split.train_indices.resize(std::size_t(run.full.size()));
        for (Index i = 0; i < run.full.size(); ++i) {
            run.split.train_indices[std::size_t(i)] = i;
        }
    }
    return run;
}

Lattice run_lattice(const RunConfig& config, Index rows)
{
    return build_lattice(config.prior, rows, *config.lattice_source, config.lattice_seed);
}

} // namespace

Dataset load_run_data(const DataConfig& data)
{
    if (data.path.empty()) {
        throw ConfigError("no data path given (set data.path or pass --data)");
    }
    std::optional<fs::path> labels;
    if (data.labels) {
        labels = *data.labels;
    }
    Dataset ds = load_dataset(data.path, data.format, labels);
    if (data.max_samples > 0) {
        ds = head(ds, data.max_samples);
    }
    if (data.image_shape) {
        if (data.image_shape->size() != ds.dim()) {
            throw ShapeError("image_shape " + std::to_string(data.image_shape->height) + "x" +
                             std::to_string(data.image_shape->width) + "x" +
                             std::to_string(data.image_shape->channels) + " does not match width " +
                             std::to_string(ds.dim()));
        }
        ds.image_shape = data.image_shape;
        ds.validate();
    }
    if (data.downsample > 1) {
        if (!ds.image_shape) {
            throw ConfigError("downsampling needs image-shaped data");
        }
        ds = downsample(ds, data.downsample);
    }
    return ds;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history)
{
    std::ostringstream text;
    text << "epoch,mean_loss,assignment_cost,assign_method,epoch_ms\n";
    for (const auto& r : history) {
        char ms[64];
        std::snprintf(ms, sizeof ms, "%.3f", r.epoch_ms);
        text << r.epoch << ',' << format_double(r.mean_loss) << ','
             << (r.assignment_cost ? format_double(*r.assignment_cost) : std::string()) << ','
             << (r.assign_method ? to_string(*r.assign_method) : std::string("none")) << ',' << ms << '\n';
    }
    write_text(path, text.str());
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err)
{
    return guarded("train", err, [&] {
        RunConfig config = load_run_config(args.config);
        if (args.data) {
            config.data.path = args.data->string();
        }
        if (!config.data.path.empty()) {
            config.data.path = fs::absolute(config.data.path).lexically_normal().string();
        }
        RunData data = prepare_data(config);
        resolve_run_config(config, data.full.image_shape);
        const Index n = data.split.train.size();
        const Lattice lattice = run_lattice(config, n);

        fs::create_directories(args.out);
        TrainConfig train = config.train;
        train.dump_dir = args.out;
        std::optional<RowMatrix> validation;
        if (data.split.validation.size() > 0) {
            validation = data.split.validation.samples;
        }
        const TrainState state = fit(data.split.train.samples, lattice.points, train, std::nullopt, validation);

        save_checkpoint(args.out / "model.nsql", state.params);
        write_container(args.out / "latents.nsqt", state.latents);
        write_history_csv(args.out / "history.csv", state.history);
        ResolvedFacts facts;
        facts.image_shape = data.full.image_shape;
        facts.train_rows = n;
        facts.validation_rows = data.split.validation.size();
        facts.lattice_rows = lattice.size();
        write_text(args.out / "config.resolved.json", dump_run_config(config, facts));

        out << "trained " << state.epoch << " epochs on " << n << " rows";
        if (!state.history.empty()) {
            out << ", final mean loss " << format_double(state.history.back().mean_loss);
            if (state.history.back().peak_rss_kb) {
                out << ", peak rss " << *state.history.back().peak_rss_kb << " KiB";
            }
        }
        out << "; outputs in " << args.out.string() << '\n';
        return int(exit_ok);
    });
}

namespace {

struct RunContext {
    std::optional<RunConfig> config;
    ResolvedFacts facts;
};

RunContext load_run_context(const fs::path& dir)
{
    RunContext ctx;
    const fs::path snapshot = dir / "config.resolved.json";
    if (fs::exists(snapshot)) {
        ctx.config = load_run_config(snapshot);
        ctx.facts = read_resolved_facts(snapshot);
    }
    return ctx;
}

} // namespace

int cmd_sample(const SampleArgs& args, std::ostream& out, std::ostream& err)
{
    return guarded("sample", err, [&] {
        const SampleMode mode = parse_sample_mode(args.mode);
        if (args.n < 1) {
            throw ConfigError("--n must be >= 1");
        }
        const Decoder params = load_checkpoint(args.model);
        const RunContext ctx = load_run_context(args.model.parent_path());

        PriorSpec prior{PriorKind::standard_gaussian, params.input_dim()};
        if (ctx.config) {
            prior = ctx.config->prior;
        }
        SampleRequest request{args.n, mode, args.seed};
        RowMatrix samples;
        if (mode == SampleMode::lattice_rows) {
            if (!ctx.config) {
                throw ConfigError("lattice_rows sampling needs config.resolved.json next to the model");
            }
            RunConfig config = *ctx.config;
            if (!config.lattice_source) {
                config.lattice_source = default_lattice_source(config.prior);
            }
            if (args.n > ctx.facts.lattice_rows) {
                throw ConfigError("requested " + std::to_string(args.n) + " lattice rows, the training lattice has " +
                                  std::to_string(ctx.facts.lattice_rows));
            }
            const Lattice lattice = run_lattice(config, ctx.facts.lattice_rows);
            samples = sample(params, request, prior, &lattice.points);
        } else {
            samples = sample(params, request, prior);
        }

        const fs::path target = args.out ? *args.out : args.model.parent_path() / "samples.nsqt";
        write_container(target, samples);
        out << "wrote " << samples.rows() << " x " << samples.cols() << " samples to " << target.string() << '\n';
        if (ctx.facts.image_shape && ctx.facts.image_shape->size() == samples.cols()) {
            fs::path grid = target;
            grid.replace_extension(".pgm");
            write_pgm_grid(grid, samples, *ctx.facts.image_shape);
            out << "wrote image grid " << grid.string() << '\n';
        }
        return int(exit_ok);
    });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err)
{
    return guarded("eval", err, [&] {
        if (args.downsample < 1 || args.max_pairs < 1 || args.max_samples < 2 || args.feature_dim < 1) {
            throw ConfigError("eval needs downsample >= 1, max_pairs >= 1, max_samples >= 2, feature_dim >= 1");
        }
        Dataset real = load_dataset(args.real);
        if (args.downsample > 1) {
            if (!real.image_shape) {
                throw ConfigError("--downsample needs an image-shaped real set");
            }
            real = downsample(real, args.downsample);
        }
        const Dataset fake = load_dataset(args.fake);
        if (real.dim() != fake.dim()) {
            throw ShapeError("real width " + std::to_string(real.dim()) + " != fake width " +
                             std::to_string(fake.dim()));
        }
        std::optional<ImageShape> shape = real.image_shape ? real.image_shape : fake.image_shape;
        if (args.shape) {
            shape = parse_shape_text(*args.shape);
        }
        if (shape && shape->size() != real.dim()) {
            throw ShapeError("image shape does not match sample width " + std::to_string(real.dim()));
        }

        const FeatureExtractor fe = make_feature_extractor(args.seed, real.dim(), args.feature_dim);
        const double fid = proxy_fid(real.samples, fake.samples, fe, ProxyFidOptions{args.max_samples, args.seed});

        nlohmann::ordered_json report;
        report["proxy_fid"] = fid;
        if (shape) {
            const PairStats stats = paired_stats(real.samples, fake.samples, *shape, args.max_pairs);
            report["ssim_mean"] = stats.ssim_mean;
            report["ssim_std"] = stats.ssim_std;
            report["l1_mean"] = stats.l1_mean;
            report["n_pairs"] = stats.n_pairs;
        } else {
            const Index pairs = std::min({real.size(), fake.size(), args.max_pairs});
            double l1 = 0.0;
            for (Index i = 0; i < pairs; ++i) {
                l1 += (real.samples.row(i) - fake.samples.row(i)).cwiseAbs().mean();
            }
            report["ssim_mean"] = nullptr;
            report["ssim_std"] = nullptr;
            report["l1_mean"] = l1 / double(pairs);
            report["n_pairs"] = pairs;
        }
        report["lpips"] = nullptr;
        const std::string text = report.dump(2) + "\n";
        if (args.out) {
            write_text(*args.out, text);
        } else {
            out << text;
        }
        return int(exit_ok);
    });
}

int cmd_lattice(const LatticeArgs& args, std::ostream& out, std::ostream& err)
{
    return guarded("lattice", err, [&] {
        const PriorSpec prior{parse_prior_kind(args.prior), args.dim};
        prior.validate();
        const LatticeSource source =
            args.source == "auto" ? default_lattice_source(prior) : parse_lattice_source(args.source);
        const Lattice lattice = build_lattice(prior, args.n, source, args.seed);
        std::vector<std::string> header;
        for (Index k = 0; k < lattice.dim(); ++k) {
            header.push_back("dim" + std::to_string(k));
        }
        if (args.out) {
            if (args.out->extension() == ".nsqt") {
                write_container(*args.out, lattice.points);
            } else {
                write_csv(*args.out, header, lattice.points);
            }
            return int(exit_ok);
        }
        for (std::size_t k = 0; k < header.size(); ++k) {
            out << (k ? "," : "") << header[k];
        }
        out << '\n';
        for (Index i = 0; i < lattice.size(); ++i) {
            for (Index k = 0; k < lattice.dim(); ++k) {
                out << (k ? "," : "") << format_double(lattice.points(i, k));
            }
            out << '\n';
        }
        return int(exit_ok);
    });
}

int cmd_bench_assign(const BenchArgs& args, std::ostream& out, std::ostream& err)
{
    return guarded("bench-assign", err, [&] {
        std::vector<AssignMethod> methods;
        if (args.method == "both") {
            methods = {AssignMethod::hungarian, AssignMethod::greedy};
        } else {
            methods = {parse_assign_method(args.method)};
        }
        if (args.repeats < 1 || args.n < 2) {
            throw ConfigError("bench-assign needs --n >= 2 and --repeats >= 1");
        }
        const auto results = bench_assign(args.n, methods, args.repeats, args.seed);
        std::ostringstream text;
        text << "method,n,mean_ms,std_ms\n";
        for (const auto& r : results) {
            char line[160];
            std::snprintf(line, sizeof line, "%s,%ld,%.3f,%.3f\n", to_string(r.method).c_str(), long(r.n), r.mean_ms,
                          r.std_ms);
            text << line;
        }
        if (args.out) {
            write_text(*args.out, text.str());
        } else {
            out << text.str();
        }
        return int(exit_ok);
    });
}

int cmd_export_latents(const ExportArgs& args, std::ostream& out, std::ostream& err)
{
    return guarded("export-latents", err, [&] {
        const Container latents = read_container(args.run / "latents.nsqt");
        const RunContext ctx = load_run_context(args.run);
        std::optional<std::vector<int>> labels;
        if (ctx.config && ctx.config->data.labels) {
            const RunData data = prepare_data(*ctx.config);
            if (data.split.train.size() != latents.values.rows()) {
                throw ShapeError("training split has " + std::to_string(data.split.train.size()) +
                                 " rows, latents have " + std::to_string(latents.values.rows()));
            }
            labels = data.split.train.labels;
        }
        const LatentTable table = export_latents(latents.values, labels);
        const fs::path target = args.out ? *args.out : args.run / "latents.csv";
        write_csv(target, table.header, table.rows);
        out << "wrote " << table.rows.rows() << " latent rows to " << target.string() << '\n';
        return int(exit_ok);
    });
}

} // namespace nsql
