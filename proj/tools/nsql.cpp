// nsql: train, sample, evaluate and inspect quantile-assignment models.

#include "nsql/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    using namespace nsql;

    CLI::App app{"Encoder-free generative modeling by quantile assignment"};
    app.require_subcommand(1);

    TrainArgs train;
    std::string train_data;
    auto* train_cmd = app.add_subcommand("train", "Fit a decoder from a run config");
    train_cmd->add_option("--config", train.config, "Run config (JSON)")->required();
    train_cmd->add_option("--data", train_data, "Dataset path, overrides data.path");
    train_cmd->add_option("--out", train.out, "Output directory")->required();

    SampleArgs sample;
    std::string sample_out;
    auto* sample_cmd = app.add_subcommand("sample", "Decode latent codes from a trained model");
    sample_cmd->add_option("--model", sample.model, "Checkpoint (model.nsql)")->required();
    sample_cmd->add_option("--n", sample.n, "Number of samples")->capture_default_str();
    sample_cmd->add_option("--mode", sample.mode, "prior_draws or lattice_rows")->capture_default_str();
    sample_cmd->add_option("--seed", sample.seed, "Sampling seed")->capture_default_str();
    sample_cmd->add_option("--out", sample_out, "Output container (default: samples.nsqt beside the model)");

    EvalArgs eval;
    std::string eval_out;
    std::string eval_shape;
    auto* eval_cmd = app.add_subcommand("eval", "Proxy-FID and paired SSIM/L1 between two sample sets");
    eval_cmd->add_option("--real", eval.real, "Reference samples")->required();
    eval_cmd->add_option("--fake", eval.fake, "Generated samples")->required();
    eval_cmd->add_option("--seed", eval.seed, "Feature extractor and subsampling seed")->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "Write the JSON report here instead of stdout");
    eval_cmd->add_option("--shape", eval_shape, "Image shape h,w[,c] when the inputs carry none");
    eval_cmd->add_option("--downsample", eval.downsample, "Downsampling factor for the real set")
        ->capture_default_str();
    eval_cmd->add_option("--max-samples", eval.max_samples, "Sample cap per set for proxy-FID")
        ->capture_default_str();
    eval_cmd->add_option("--pairs", eval.max_pairs, "Pairs for SSIM/L1 statistics")->capture_default_str();
    eval_cmd->add_option("--feature-dim", eval.feature_dim, "Proxy-FID feature width")->capture_default_str();

    LatticeArgs lattice;
    std::string lattice_out;
    auto* lattice_cmd = app.add_subcommand("lattice", "Print a quantile lattice as CSV");
    lattice_cmd->add_option("--prior", lattice.prior, "uniform01, standard_gaussian or uniform_ball")
        ->capture_default_str();
    lattice_cmd->add_option("--d", lattice.dim, "Latent dimension")->capture_default_str();
    lattice_cmd->add_option("--n", lattice.n, "Number of points")->capture_default_str();
    lattice_cmd->add_option("--source", lattice.source, "auto, univariate_quantiles, sobol or uniform_grid")
        ->capture_default_str();
    lattice_cmd->add_option("--seed", lattice.seed, "Sobol digital shift seed")->capture_default_str();
    lattice_cmd->add_option("--out", lattice_out, "CSV path (default: stdout)");

    BenchArgs bench;
    std::string bench_out;
    auto* bench_cmd = app.add_subcommand("bench-assign", "Time assignment solvers on random cost matrices");
    bench_cmd->add_option("--n", bench.n, "Matrix size")->capture_default_str();
    bench_cmd->add_option("--method", bench.method, "both, hungarian, greedy or brute_force")->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Matrices per method")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "Cost matrix seed")->capture_default_str();
    bench_cmd->add_option("--out", bench_out, "CSV path (default: stdout)");

    ExportArgs exporter;
    std::string export_out;
    auto* export_cmd = app.add_subcommand("export-latents", "Write a run's latent codes as CSV");
    export_cmd->add_option("--run", exporter.run, "Directory written by train")->required();
    export_cmd->add_option("--out", export_out, "CSV path (default: <run>/latents.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : int(exit_config);
    }

    if (*train_cmd) {
        if (!train_data.empty()) {
            train.data = train_data;
        }
        return cmd_train(train, std::cout, std::cerr);
    }
    if (*sample_cmd) {
        if (!sample_out.empty()) {
            sample.out = sample_out;
        }
        return cmd_sample(sample, std::cout, std::cerr);
    }
    if (*eval_cmd) {
        if (!eval_out.empty()) {
            eval.out = eval_out;
        }
        if (!eval_shape.empty()) {
            eval.shape = eval_shape;
        }
        return cmd_eval(eval, std::cout, std::cerr);
    }
    if (*lattice_cmd) {
        if (!lattice_out.empty()) {
            lattice.out = lattice_out;
        }
        return cmd_lattice(lattice, std::cout, std::cerr);
    }
    if (*bench_cmd) {
        if (!bench_out.empty()) {
            bench.out = bench_out;
        }
        return cmd_bench_assign(bench, std::cout, std::cerr);
    }
    if (!export_out.empty()) {
        exporter.out = export_out;
    }
    return cmd_export_latents(exporter, std::cout, std::cerr);
}
