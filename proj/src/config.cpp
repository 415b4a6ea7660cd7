#include "nsql/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace nsql {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Typed access to one JSON object; every key must be claimed.
class Section {
  public:
    Section(const json& node, std::string where) : node_(node), where_(std::move(where))
    {
        if (!node_.is_object()) {
            throw ConfigError(where_ + " must be an object");
        }
    }

    ~Section() noexcept(false)
    {
        if (std::uncaught_exceptions() == 0) {
            for (const auto& item : node_.items()) {
                if (!claimed_.count(item.key())) {
                    throw ConfigError("unknown key '" + qualify(item.key()) + "'");
                }
            }
        }
    }

    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;

    bool has(const std::string& key)
    {
        claimed_.insert(key);
        return node_.contains(key) && !node_.at(key).is_null();
    }

    const json& at(const std::string& key)
    {
        claimed_.insert(key);
        return node_.at(key);
    }

    std::string qualify(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        if (!has(key)) {
            return;
        }
        const json& value = node_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!value.is_boolean()) {
                    throw ConfigError("");
                }
                out = value.get<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                if (!value.is_number_integer()) {
                    throw ConfigError("");
                }
                if constexpr (std::is_unsigned_v<T>) {
                    if (value.is_number_unsigned()) {
                        out = value.get<T>();
                    } else if (value.get<std::int64_t>() < 0) {
                        throw ConfigError("");
                    } else {
                        out = T(value.get<std::int64_t>());
                    }
                } else {
                    out = value.get<T>();
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!value.is_number()) {
                    throw ConfigError("");
                }
                out = value.get<T>();
            } else {
                if (!value.is_string()) {
                    throw ConfigError("");
                }
                out = value.get<std::string>();
            }
        } catch (const ConfigError&) {
            throw ConfigError("'" + qualify(key) + "' has the wrong type (" + value.dump() + ")");
        }
    }

    std::optional<std::string> text(const std::string& key)
    {
        if (!has(key)) {
            return std::nullopt;
        }
        std::string out;
        read(key, out);
        return out;
    }

  private:
    const json& node_;
    std::string where_;
    std::set<std::string> claimed_;
};

ImageShape parse_shape(const json& value, const std::string& where)
{
    if (!value.is_array() || value.size() < 2 || value.size() > 3) {
        throw ConfigError(where + " must be [height, width] or [height, width, channels]");
    }
    for (const auto& v : value) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
            throw ConfigError(where + " entries must be positive integers");
        }
    }
    ImageShape shape{value[0].get<int>(), value[1].get<int>(), value.size() == 3 ? value[2].get<int>() : 1};
    return shape;
}

void parse_data(Section& s, DataConfig& data)
{
    s.read("path", data.path);
    s.read("format", data.format);
    data.labels = s.text("labels");
    s.read("downsample", data.downsample);
    s.read("max_samples", data.max_samples);
    s.read("validation_fraction", data.validation_fraction);
    s.read("split_seed", data.split_seed);
    if (s.has("image_shape")) {
        data.image_shape = parse_shape(s.at("image_shape"), s.qualify("image_shape"));
    }
    if (data.downsample < 1) {
        throw ConfigError("data.downsample must be >= 1");
    }
    if (data.max_samples < 0) {
        throw ConfigError("data.max_samples must be >= 0");
    }
    if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0)) {
        throw ConfigError("data.validation_fraction must lie in [0, 1)");
    }
}

void parse_optimizer(Section& s, OptimizerConfig& opt)
{
    s.read("learning_rate", opt.learning_rate);
    s.read("weight_decay", opt.weight_decay);
    s.read("beta1", opt.beta1);
    s.read("beta2", opt.beta2);
    s.read("eps", opt.eps);
    s.read("grad_clip_norm", opt.grad_clip_norm);
    if (auto name = s.text("schedule")) {
        if (*name == "constant") {
            opt.schedule = Schedule::constant;
        } else if (*name == "cosine_warm_restarts") {
            opt.schedule = Schedule::cosine_warm_restarts;
        } else {
            throw ConfigError("unknown schedule '" + *name + "' (expected constant or cosine_warm_restarts)");
        }
    }
    s.read("period_epochs", opt.period_epochs);
}

void parse_train(Section& s, TrainConfig& train)
{
    s.read("max_epochs", train.max_epochs);
    s.read("assignment_period", train.assignment_period);
    s.read("momentum", train.momentum);
    if (auto mode = s.text("mode")) {
        train.mode = parse_train_mode(*mode);
    }
    s.read("batch_size", train.batch_size);
    if (auto method = s.text("assign_method")) {
        train.assign_method = parse_assign_choice(*method);
    }
    s.read("greedy_threshold", train.greedy_threshold);
    s.read("patience", train.patience);
    s.read("inner_epochs", train.inner_epochs);
    if (auto init = s.text("init")) {
        train.init = parse_init_mode(*init);
    }
    s.read("seed", train.seed);
}

std::string schedule_name(Schedule schedule)
{
    return schedule == Schedule::constant ? "constant" : "cosine_warm_restarts";
}

ordered_json shape_json(const ImageShape& shape)
{
    return ordered_json::array({shape.height, shape.width, shape.channels});
}

} // namespace

LatticeSource default_lattice_source(const PriorSpec& prior)
{
    return prior.dim == 1 ? LatticeSource::univariate_quantiles : LatticeSource::sobol;
}

RunConfig parse_run_config(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig config;
    {
        Section root(doc, "");
        if (!root.has("schema_version")) {
            throw ConfigError("config is missing schema_version");
        }
        int version = 0;
        root.read("schema_version", version);
        if (version != config_schema_version) {
            throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                              std::to_string(config_schema_version) + ")");
        }
        if (root.has("data")) {
            Section s(root.at("data"), "data");
            parse_data(s, config.data);
        }
        if (root.has("prior")) {
            Section s(root.at("prior"), "prior");
            if (auto kind = s.text("kind")) {
                config.prior.kind = parse_prior_kind(*kind);
            }
            s.read("dim", config.prior.dim);
        }
        if (root.has("lattice")) {
            Section s(root.at("lattice"), "lattice");
            if (auto source = s.text("source"); source && *source != "auto") {
                config.lattice_source = parse_lattice_source(*source);
            }
            s.read("seed", config.lattice_seed);
        }
        if (root.has("decoder")) {
            Section s(root.at("decoder"), "decoder");
            if (s.has("hidden")) {
                const json& hidden = s.at("hidden");
                if (!hidden.is_array()) {
                    throw ConfigError("decoder.hidden must be an array of widths");
                }
                config.train.decoder.hidden.clear();
                for (const auto& h : hidden) {
                    if (!h.is_number_integer()) {
                        throw ConfigError("decoder.hidden entries must be integers");
                    }
                    config.train.decoder.hidden.push_back(h.get<Index>());
                }
            }
            if (auto act = s.text("activation")) {
                config.train.decoder.activation = parse_activation(*act);
            }
            if (auto out = s.text("output_activation"); out && *out != "auto") {
                config.output_activation = parse_output_activation(*out);
            }
            s.read("init_seed", config.train.decoder.init_seed);
        }
        if (root.has("loss")) {
            Section s(root.at("loss"), "loss");
            if (auto kind = s.text("kind"); kind && *kind != "auto") {
                config.loss_kind = parse_loss_kind(*kind);
            }
            s.read("window", config.train.loss.window);
            s.read("data_range", config.train.loss.data_range);
        }
        if (root.has("optimizer")) {
            Section s(root.at("optimizer"), "optimizer");
            parse_optimizer(s, config.train.optimizer);
        }
        if (root.has("train")) {
            Section s(root.at("train"), "train");
            parse_train(s, config.train);
        }
        if (root.has("resolved")) {
            root.at("resolved"); // informational, written by snapshots
        }
    }
    config.prior.validate();
    config.train.validate();
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

void resolve_run_config(RunConfig& config, const std::optional<ImageShape>& data_shape)
{
    if (!config.lattice_source) {
        config.lattice_source = default_lattice_source(config.prior);
    }
    if (!config.loss_kind) {
        config.loss_kind = data_shape ? LossKind::ssim_l1 : LossKind::l2;
    }
    if (!config.output_activation) {
        config.output_activation = data_shape ? OutputActivation::sigmoid : OutputActivation::identity;
    }
    config.train.loss.kind = *config.loss_kind;
    config.train.loss.image_shape = data_shape;
    config.train.decoder.output_activation = *config.output_activation;
}

std::string dump_run_config(const RunConfig& config, const ResolvedFacts& facts)
{
    const TrainConfig& t = config.train;
    ordered_json doc;
    doc["schema_version"] = config_schema_version;

    ordered_json data;
    data["path"] = config.data.path;
    data["format"] = config.data.format;
    data["labels"] = config.data.labels ? ordered_json(*config.data.labels) : ordered_json(nullptr);
    data["downsample"] = config.data.downsample;
    data["max_samples"] = config.data.max_samples;
    data["validation_fraction"] = config.data.validation_fraction;
    data["split_seed"] = config.data.split_seed;
    data["image_shape"] = config.data.image_shape ? shape_json(*config.data.image_shape) : ordered_json(nullptr);
    doc["data"] = data;

    doc["prior"] = {{"kind", to_string(config.prior.kind)}, {"dim", config.prior.dim}};
    doc["lattice"] = {
        {"source", config.lattice_source ? to_string(*config.lattice_source) : std::string("auto")},
        {"seed", config.lattice_seed}};
    doc["decoder"] = {{"hidden", t.decoder.hidden},
                      {"activation", to_string(t.decoder.activation)},
                      {"output_activation",
                       config.output_activation ? to_string(*config.output_activation) : std::string("auto")},
                      {"init_seed", t.decoder.init_seed}};
    doc["loss"] = {{"kind", config.loss_kind ? to_string(*config.loss_kind) : std::string("auto")},
                   {"window", t.loss.window},
                   {"data_range", t.loss.data_range}};
    doc["optimizer"] = {{"learning_rate", t.optimizer.learning_rate},
                        {"weight_decay", t.optimizer.weight_decay},
                        {"beta1", t.optimizer.beta1},
                        {"beta2", t.optimizer.beta2},
                        {"eps", t.optimizer.eps},
                        {"grad_clip_norm", t.optimizer.grad_clip_norm},
                        {"schedule", schedule_name(t.optimizer.schedule)},
                        {"period_epochs", t.optimizer.period_epochs}};
    doc["train"] = {{"max_epochs", t.max_epochs},
                    {"assignment_period", t.assignment_period},
                    {"momentum", t.momentum},
                    {"mode", to_string(t.mode)},
                    {"batch_size", t.batch_size},
                    {"assign_method", to_string(t.assign_method)},
                    {"greedy_threshold", t.greedy_threshold},
                    {"patience", t.patience},
                    {"inner_epochs", t.inner_epochs},
                    {"init", to_string(t.init)},
                    {"seed", t.seed}};

    ordered_json resolved;
    resolved["image_shape"] = facts.image_shape ? shape_json(*facts.image_shape) : ordered_json(nullptr);
    resolved["train_rows"] = facts.train_rows;
    resolved["validation_rows"] = facts.validation_rows;
    resolved["lattice_rows"] = facts.lattice_rows;
    doc["resolved"] = resolved;
    return doc.dump(2) + "\n";
}

ResolvedFacts read_resolved_facts(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + " is not valid JSON: " + e.what());
    }
    ResolvedFacts facts;
    if (!doc.contains("resolved") || !doc["resolved"].is_object()) {
        return facts;
    }
    const json& r = doc["resolved"];
    try {
        if (r.contains("image_shape") && !r["image_shape"].is_null()) {
            facts.image_shape = parse_shape(r["image_shape"], "resolved.image_shape");
        }
        facts.train_rows = r.value("train_rows", Index(0));
        facts.validation_rows = r.value("validation_rows", Index(0));
        facts.lattice_rows = r.value("lattice_rows", Index(0));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": malformed resolved block: " + e.what());
    }
    return facts;
}

} // namespace nsql
