#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mta/attribution.hpp"
#include "mta/baselines.hpp"
#include "mta/dataset.hpp"
#include "mta/model.hpp"
#include "mta/synthgen.hpp"
#include "mta/train.hpp"

namespace mta::cli {

// Exit codes shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;    // input or configuration problem
constexpr int kExitNumeric = 3;  // numerical failure (divergence, non-finite)

// ---------------------------------------------------------------------------
// Options

struct GenerateOptions {
    std::string spec_file;              // JSON GeneratorSpec; built-in default when empty
    std::string out = "data.jsonl";
    std::optional<std::uint64_t> seed;  // overrides the spec's seed
    std::optional<std::size_t> n_paths; // overrides the spec's path count
};

struct TrainOptions {
    std::string data;
    std::string out = "model.json";
    std::string log_file;               // per-epoch CSV; sequence variants only
    std::string variant = "dnamta";     // lstm|dnamta|timedecay|fusion|lr|lta
    std::uint64_t seed = 0;
    double dedup_hours = 1.0;
    double neg_ratio = 1.0;
    std::vector<double> split = {0.7, 0.1, 0.2};
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 16;
    std::size_t attention_dim = 0;      // 0: follow hidden_dim
    std::size_t layers = 3;
    std::string lambda = "learned";     // learned | fixed:<value>
    std::size_t epochs = 50;
    std::size_t patience = 5;
    double learning_rate = 1e-3;
    std::size_t batch = 32;
    double clip = 5.0;                  // global gradient norm cap, 0 disables
    std::string monitor = "loss";       // early-stopping metric: loss | auc
    double l2 = 1e-4;                   // lr baseline only
    bool lr_binary = false;             // lr baseline: binary features instead of counts
    std::size_t lr_horizon = 57;        // lr baseline: lag bucket horizon in days
};

struct EvalOptions {
    std::string model;
    std::string data;
    std::string out; // optional metrics JSON file
};

struct AttributeOptions {
    std::string model;
    std::string data;
    std::string out_dir = "report";
    std::size_t top_k = 5;       // heatmaps for the k highest-probability conversions
    bool attention = false;      // also write attention.csv (attention variants only)
    std::size_t bucket_days = 1;
};

struct BenchmarkOptions {
    std::string out_dir = "benchmark";
    std::uint64_t seed = 0;
    std::size_t n_paths = 5000;
    std::size_t hidden_dim = 20;
    std::size_t embed_dim = 10;
    std::size_t attention_dim = 16;
    std::size_t layers = 1;
    std::size_t epochs = 12;
    std::size_t patience = 3;
    double learning_rate = 0.01;
    std::size_t batch = 32;
};

// ---------------------------------------------------------------------------
// Shared plumbing

// Planted ground truth used by `benchmark` and, when no spec file is given,
// by `generate`: per-channel effect mass 3:2:1 (display:email:paidsearch),
// exponential decay, and a conversion bump from the control variables that
// only the fusion variant can see.
inline GeneratorSpec benchmark_spec(std::uint64_t seed, std::size_t n_paths = 5000) {
    GeneratorSpec s;
    s.n_paths = n_paths;
    s.seed = seed;
    s.beta = {0.75, 0.75, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.5};
    s.decay = 1.7;
    s.base_logit = -1.0;
    s.gamma = {0.0, 0.8, 0.8};
    s.mean_length = 4.0;
    s.mean_gap_days = 0.3;
    s.horizon_days = 56.0;
    return s;
}

struct LoadedData {
    std::vector<TouchpointPath> paths;
    std::vector<std::string> schema;
};

inline LoadedData load_jsonl(const std::string& file, const Vocabulary& vocab) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open data file: " + file);
    auto res = ingest_jsonl(in, vocab);
    return {std::move(res.paths), std::move(res.control_schema)};
}

inline void apply_lambda_flag(ModelConfig& cfg, const std::string& s) {
    if (s == "learned") {
        cfg.decay_mode = DecayMode::learned;
        return;
    }
    if (s.rfind("fixed:", 0) == 0) {
        cfg.decay_mode = DecayMode::fixed;
        cfg.fixed_lambda = std::stod(s.substr(6));
        return;
    }
    throw ConfigError("bad --lambda value '" + s + "' (expected learned or fixed:<value>)");
}

inline std::string safe_filename(const std::string& id) {
    std::string out;
    for (char c : id)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out.empty() ? "_" : out;
}

inline std::ofstream open_out(const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write file: " + file.string());
    return out;
}

inline nlohmann::ordered_json metrics_json(const EvalResult& r) {
    return {{"accuracy", r.accuracy}, {"auc", r.auc_value}, {"logloss", r.logloss}, {"n", r.n}};
}

// A loaded model of any variant, reduced to what reporting needs.
struct AnyModel {
    std::string variant;
    Predictor predictor;
    std::optional<TrainedModel> sequence; // present for the four sequence variants
};

inline AnyModel load_any_model(const std::string& file) {
    const ordered_json j = read_json_file(file);
    std::string variant;
    try {
        variant = j.at("variant").get<std::string>();
    } catch (const ordered_json::exception&) {
        throw ModelIoError(file + ": missing variant field");
    }
    AnyModel m;
    m.variant = variant;
    if (variant == "lta") {
        m.predictor = make_predictor(load_lta_json(j, file));
    } else if (variant == "lr") {
        m.predictor = make_predictor(load_lr_json(j, file));
    } else {
        TrainedModel seq = load_model_json(j, file);
        m.predictor = make_predictor(seq);
        m.sequence = std::move(seq);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Subcommands. Each throws on failure; run_cli maps exceptions to exit codes.

inline int cmd_generate(const GenerateOptions& opt, std::ostream& out) {
    GeneratorSpec spec;
    if (!opt.spec_file.empty()) {
        spec = GeneratorSpec::from_json(read_json_file(opt.spec_file));
    } else {
        spec = benchmark_spec(0);
    }
    if (opt.seed) spec.seed = *opt.seed;
    if (opt.n_paths) spec.n_paths = *opt.n_paths;

    const auto vocab = Vocabulary::standard();
    const auto paths = generate(spec, vocab);

    auto data_out = open_out(opt.out);
    export_jsonl(data_out, paths, vocab, generator_control_schema());
    auto spec_out = open_out(opt.out + ".spec.json");
    spec_out << spec.to_json().dump(1) << "\n";

    std::size_t conv = 0;
    for (const auto& p : paths) conv += p.converted ? 1 : 0;
    out << "generated " << paths.size() << " paths -> " << opt.out << "\n"
        << "conversion rate " << fixed6(double(conv) / double(paths.size())) << "\n";
    return kExitOk;
}

inline DatasetSplit prepare_split(const TrainOptions& opt, const LoadedData& data) {
    if (opt.split.size() != 3)
        throw ConfigError("--split needs three comma-separated fractions");
    std::vector<TouchpointPath> cleaned;
    cleaned.reserve(data.paths.size());
    for (const auto& p : data.paths) {
        TouchpointPath d = dedup_visits(p, opt.dedup_hours);
        if (!d.events.empty()) cleaned.push_back(std::move(d));
    }
    const auto balanced = downsample_negatives(cleaned, opt.neg_ratio, opt.seed);
    return split_dataset(balanced, opt.split[0], opt.split[1], opt.split[2], opt.seed);
}

inline void write_log_header(std::ostream& log) {
    log << "epoch,train_loss,valid_loss,valid_auc,elapsed_seconds\n";
}

inline void write_log_row(std::ostream& log, const EpochLog& e) {
    log << e.epoch << "," << fixed6(e.train_loss) << "," << fixed6(e.valid_loss) << ","
        << fixed6(e.valid_auc) << "," << fixed6(e.elapsed_seconds) << "\n";
}

inline int cmd_train(const TrainOptions& opt, std::ostream& out) {
    if (opt.monitor != "loss" && opt.monitor != "auc")
        throw ConfigError("--monitor must be loss or auc, got '" + opt.monitor + "'");
    const Monitor monitor = opt.monitor == "auc" ? Monitor::valid_auc : Monitor::valid_loss;

    const auto vocab = Vocabulary::standard();
    const auto data = load_jsonl(opt.data, vocab);
    const auto split = prepare_split(opt, data);

    if (opt.variant == "lta") {
        std::vector<TouchpointPath> fit_set = split.train;
        fit_set.insert(fit_set.end(), split.validation.begin(), split.validation.end());
        const auto model = LtaModel::fit(fit_set, vocab);
        save_lta(opt.out, model);
        const auto r = evaluate_with([&](const TouchpointPath& p) { return model.predict(p); },
                                     split.validation.empty() ? split.train : split.validation);
        out << "lta model -> " << opt.out << "\n"
            << "validation accuracy " << fixed6(r.accuracy) << " auc " << fixed6(r.auc_value)
            << "\n";
        return kExitOk;
    }

    if (opt.variant == "lr") {
        LrFeatureSpec fs;
        fs.horizon_days = opt.lr_horizon;
        fs.vocab_size = vocab.size();
        fs.binary = opt.lr_binary;
        LrTrainConfig tc;
        tc.learning_rate = opt.learning_rate;
        tc.l2 = opt.l2;
        tc.batch_size = opt.batch;
        tc.max_epochs = opt.epochs;
        tc.patience = opt.patience;
        tc.monitor = monitor;
        tc.seed = opt.seed;
        const auto model = lr_train(split.train, split.validation, vocab, fs, tc);
        save_lr(opt.out, model);
        const auto r = evaluate_with([&](const TouchpointPath& p) { return model.predict(p); },
                                     split.validation);
        out << "lr model -> " << opt.out << "\n"
            << "validation accuracy " << fixed6(r.accuracy) << " auc " << fixed6(r.auc_value)
            << "\n";
        return kExitOk;
    }

    ModelConfig mcfg;
    mcfg.variant = variant_from_string(opt.variant);
    mcfg.vocab_size = vocab.size();
    mcfg.embed_dim = opt.embed_dim;
    mcfg.hidden_dim = opt.hidden_dim;
    mcfg.attention_dim = opt.attention_dim ? opt.attention_dim : opt.hidden_dim;
    mcfg.lstm_layers = opt.layers;
    mcfg.control_dim = mcfg.uses_controls() ? data.schema.size() : 0;
    apply_lambda_flag(mcfg, opt.lambda);
    mcfg.validate();

    TrainConfig tcfg;
    tcfg.learning_rate = opt.learning_rate;
    tcfg.batch_size = opt.batch;
    tcfg.max_epochs = opt.epochs;
    tcfg.patience = opt.patience;
    tcfg.clip_norm = opt.clip;
    tcfg.monitor = monitor;
    tcfg.seed = opt.seed;

    std::ofstream log;
    if (!opt.log_file.empty()) {
        log = open_out(opt.log_file);
        write_log_header(log);
    }
    const auto result = train(mcfg, tcfg, split, [&](const EpochLog& e) {
        if (log.is_open()) {
            write_log_row(log, e);
            log.flush();
        }
    });

    TrainedModel model{mcfg, result.params, vocab,
                       mcfg.uses_controls() ? data.schema : std::vector<std::string>{}};
    save_model(opt.out, model);

    const auto r = evaluate(result.params, mcfg, split.validation);
    out << opt.variant << " model -> " << opt.out << "\n"
        << "best epoch " << result.best_epoch << (result.early_stopped ? " (early stop)" : "")
        << "\n"
        << "validation accuracy " << fixed6(r.accuracy) << " auc " << fixed6(r.auc_value) << "\n";
    return kExitOk;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out) {
    const auto model = load_any_model(opt.model);
    const auto data = load_jsonl(opt.data, Vocabulary::standard());
    if (data.paths.empty()) throw DataError("no paths in " + opt.data);
    const auto r = evaluate_with(model.predictor.prob, data.paths);
    const auto j = metrics_json(r);
    out << j.dump(1) << "\n";
    if (!opt.out.empty()) {
        auto f = open_out(opt.out);
        f << j.dump(1) << "\n";
    }
    return kExitOk;
}

inline int cmd_attribute(const AttributeOptions& opt, std::ostream& out) {
    const auto model = load_any_model(opt.model);
    const auto vocab = Vocabulary::standard();
    const auto data = load_jsonl(opt.data, vocab);
    if (data.paths.empty()) throw DataError("no paths in " + opt.data);

    if (opt.attention) {
        if (!model.sequence)
            throw ConfigError("attention scores require a sequence model, got variant '" +
                              model.variant + "'");
        if (!model.sequence->config.has_attention())
            throw ConfigError("attention scores are not defined for the lstm variant");
    }

    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);

    {
        auto f = open_out(dir / "fractional.csv");
        write_fractional_csv(f, fractional_scores(model.predictor, data.paths, vocab));
    }
    {
        const auto [scores, total] = incremental_report(model.predictor, data.paths, vocab);
        auto f = open_out(dir / "incremental.csv");
        write_incremental_csv(f, scores, total);
    }
    std::size_t files = 2;

    if (model.sequence) {
        const TrainedModel& seq = *model.sequence;
        {
            auto f = open_out(dir / "lag_curves.csv");
            write_lag_curves_csv(f, lag_curves(seq, data.paths, opt.bucket_days));
        }
        {
            auto f = open_out(dir / "densities.csv");
            write_densities_csv(f, exposure_window_densities(seq, data.paths));
        }
        files += 2;

        // heatmaps for the k most confidently predicted conversions
        std::vector<const TouchpointPath*> conv;
        for (const auto& p : data.paths)
            if (p.converted) conv.push_back(&p);
        std::vector<std::pair<double, const TouchpointPath*>> ranked;
        ranked.reserve(conv.size());
        for (const auto* p : conv) ranked.emplace_back(model.predictor.prob(*p), p);
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second->id < b.second->id;
        });
        const std::size_t k = std::min(opt.top_k, ranked.size());
        for (std::size_t i = 0; i < k; ++i) {
            const auto& path = *ranked[i].second;
            auto f = open_out(dir / ("heatmap_" + safe_filename(path.id) + ".csv"));
            write_heatmap_csv(f, path, vocab, heatmap_weights(seq, path));
            ++files;
        }

        if (opt.attention) {
            auto f = open_out(dir / "attention.csv");
            write_fractional_csv(f, attention_scores(seq, data.paths));
            ++files;
        }
    }

    out << "wrote " << files << " report files -> " << dir.string() << "\n";
    return kExitOk;
}

struct BenchmarkRow {
    std::string model;
    EvalResult result;
};

inline TrainOptions benchmark_train_options(const BenchmarkOptions& opt,
                                            const std::string& variant,
                                            const std::filesystem::path& dir,
                                            const std::string& data_file) {
    TrainOptions t;
    t.data = data_file;
    t.variant = variant;
    t.out = (dir / (variant + ".model.json")).string();
    t.seed = opt.seed;
    t.hidden_dim = opt.hidden_dim;
    t.embed_dim = opt.embed_dim;
    t.attention_dim = opt.attention_dim;
    t.layers = opt.layers;
    t.epochs = opt.epochs;
    t.patience = opt.patience;
    t.learning_rate = opt.learning_rate;
    t.batch = opt.batch;
    t.monitor = "auc"; // the benchmark compares AUC, so checkpoints are picked on it
    return t;
}

// Generates the planted benchmark, trains every variant plus both baselines
// on one split, and reports test metrics side by side.
inline int cmd_benchmark(const BenchmarkOptions& opt, std::ostream& out) {
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    const std::string data_file = (dir / "data.jsonl").string();

    GenerateOptions gen;
    gen.out = data_file;
    gen.seed = opt.seed;
    gen.n_paths = opt.n_paths;
    cmd_generate(gen, out);

    std::vector<BenchmarkRow> rows;
    std::ostringstream quiet;
    for (const std::string variant : {"lta", "lr", "lstm", "dnamta", "timedecay", "fusion"}) {
        const auto topt = benchmark_train_options(opt, variant, dir, data_file);
        cmd_train(topt, quiet);

        // identical pipeline -> identical split; evaluate on the test third
        const auto data = load_jsonl(data_file, Vocabulary::standard());
        const auto split = prepare_split(topt, data);
        const auto model = load_any_model(topt.out);
        rows.push_back({variant, evaluate_with(model.predictor.prob, split.test)});
        out << variant << " test auc " << fixed6(rows.back().result.auc_value) << "\n";
    }

    {
        auto f = open_out(dir / "benchmark.csv");
        f << "model,accuracy,auc,logloss,n\n";
        for (const auto& r : rows)
            f << r.model << "," << fixed6(r.result.accuracy) << "," << fixed6(r.result.auc_value)
              << "," << fixed6(r.result.logloss) << "," << r.result.n << "\n";
    }

    out << "\n" << std::left << std::setw(11) << "model" << std::right << std::setw(10)
        << "accuracy" << std::setw(10) << "auc" << std::setw(10) << "logloss" << "\n";
    for (const auto& r : rows)
        out << std::left << std::setw(11) << r.model << std::right << std::setw(10)
            << fixed6(r.result.accuracy) << std::setw(10) << fixed6(r.result.auc_value)
            << std::setw(10) << fixed6(r.result.logloss) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Argument wiring

namespace detail {

template <typename T>
void from_config(const nlohmann::json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

template <typename T>
void from_config_opt(const nlohmann::json& j, const char* key, std::optional<T>& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

// The JSON config file seeds defaults before flags are parsed, which gives
// the precedence flag > config file > built-in default.
inline nlohmann::json load_config(const std::vector<std::string>& args) {
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
            const auto j = nlohmann::json::parse(std::ifstream(args[i + 1]), nullptr, true);
            if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
            return j;
        }
    }
    return nlohmann::json::object();
}

} // namespace detail

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    try {
        const nlohmann::json cfg = detail::load_config(args);

        CLI::App app{"multi-touch attribution engine"};
        app.require_subcommand(1);
        std::string config_file;
        app.add_option("--config", config_file, "JSON file with option defaults");

        GenerateOptions gen;
        detail::from_config(cfg, "spec", gen.spec_file);
        detail::from_config(cfg, "out", gen.out);
        detail::from_config_opt(cfg, "seed", gen.seed);
        detail::from_config_opt(cfg, "n_paths", gen.n_paths);
        auto* cg = app.add_subcommand("generate", "write a synthetic journey dataset");
        cg->add_option("--spec", gen.spec_file, "generator spec JSON");
        cg->add_option("--out", gen.out, "output JSONL file");
        cg->add_option("--seed", gen.seed, "override spec seed");
        cg->add_option("--n-paths", gen.n_paths, "override spec path count");

        TrainOptions tr;
        detail::from_config(cfg, "data", tr.data);
        detail::from_config(cfg, "out", tr.out);
        detail::from_config(cfg, "log", tr.log_file);
        detail::from_config(cfg, "variant", tr.variant);
        detail::from_config(cfg, "seed", tr.seed);
        detail::from_config(cfg, "dedup_hours", tr.dedup_hours);
        detail::from_config(cfg, "neg_ratio", tr.neg_ratio);
        detail::from_config(cfg, "split", tr.split);
        detail::from_config(cfg, "hidden_dim", tr.hidden_dim);
        detail::from_config(cfg, "embed_dim", tr.embed_dim);
        detail::from_config(cfg, "attention_dim", tr.attention_dim);
        detail::from_config(cfg, "layers", tr.layers);
        detail::from_config(cfg, "lambda", tr.lambda);
        detail::from_config(cfg, "epochs", tr.epochs);
        detail::from_config(cfg, "patience", tr.patience);
        detail::from_config(cfg, "lr", tr.learning_rate);
        detail::from_config(cfg, "batch", tr.batch);
        detail::from_config(cfg, "clip", tr.clip);
        detail::from_config(cfg, "monitor", tr.monitor);
        detail::from_config(cfg, "l2", tr.l2);
        detail::from_config(cfg, "lr_binary", tr.lr_binary);
        detail::from_config(cfg, "lr_horizon", tr.lr_horizon);
        auto* ct = app.add_subcommand("train", "train a model variant or baseline");
        ct->add_option("--data", tr.data, "training data JSONL")->required();
        ct->add_option("--out", tr.out, "model output file");
        ct->add_option("--log", tr.log_file, "per-epoch training log CSV");
        ct->add_option("--variant", tr.variant, "lstm|dnamta|timedecay|fusion|lr|lta");
        ct->add_option("--seed", tr.seed, "seed for all derived randomness");
        ct->add_option("--dedup-hours", tr.dedup_hours, "repeat-visit removal window");
        ct->add_option("--neg-ratio", tr.neg_ratio, "negatives kept per positive");
        ct->add_option("--split", tr.split, "train,validation,test fractions")
            ->delimiter(',')
            ->expected(3);
        ct->add_option("--hidden-dim", tr.hidden_dim, "LSTM hidden width");
        ct->add_option("--embed-dim", tr.embed_dim, "touchpoint embedding width");
        ct->add_option("--attention-dim", tr.attention_dim, "attention width (0: hidden)");
        ct->add_option("--layers", tr.layers, "stacked LSTM layers");
        ct->add_option("--lambda", tr.lambda, "decay mode: learned or fixed:<value>");
        ct->add_option("--epochs", tr.epochs, "max training epochs");
        ct->add_option("--patience", tr.patience, "early-stopping patience");
        ct->add_option("--lr", tr.learning_rate, "Adam learning rate");
        ct->add_option("--batch", tr.batch, "minibatch size");
        ct->add_option("--clip", tr.clip, "gradient norm cap (0 disables)");
        ct->add_option("--monitor", tr.monitor, "early-stopping metric: loss or auc");
        ct->add_option("--l2", tr.l2, "lr baseline: L2 strength");
        ct->add_flag("--lr-binary", tr.lr_binary, "lr baseline: binary bucket features");
        ct->add_option("--lr-horizon", tr.lr_horizon, "lr baseline: lag horizon in days");

        EvalOptions ev;
        detail::from_config(cfg, "model", ev.model);
        detail::from_config(cfg, "data", ev.data);
        auto* ce = app.add_subcommand("eval", "report accuracy/auc/logloss on a dataset");
        ce->add_option("--model", ev.model, "model file")->required();
        ce->add_option("--data", ev.data, "evaluation data JSONL")->required();
        ce->add_option("--out", ev.out, "also write metrics JSON here");

        AttributeOptions at;
        detail::from_config(cfg, "model", at.model);
        detail::from_config(cfg, "data", at.data);
        detail::from_config(cfg, "out_dir", at.out_dir);
        detail::from_config(cfg, "top_k", at.top_k);
        detail::from_config(cfg, "attention", at.attention);
        detail::from_config(cfg, "bucket_days", at.bucket_days);
        auto* ca = app.add_subcommand("attribute", "write the channel-credit report bundle");
        ca->add_option("--model", at.model, "model file")->required();
        ca->add_option("--data", at.data, "paths to attribute, JSONL")->required();
        ca->add_option("--out", at.out_dir, "report directory");
        ca->add_option("--top-k", at.top_k, "heatmaps for the top k conversions");
        ca->add_flag("--attention", at.attention, "also write attention.csv");
        ca->add_option("--bucket-days", at.bucket_days, "lag curve bucket width");

        BenchmarkOptions bm;
        detail::from_config(cfg, "out_dir", bm.out_dir);
        detail::from_config(cfg, "seed", bm.seed);
        detail::from_config(cfg, "n_paths", bm.n_paths);
        detail::from_config(cfg, "hidden_dim", bm.hidden_dim);
        detail::from_config(cfg, "embed_dim", bm.embed_dim);
        detail::from_config(cfg, "attention_dim", bm.attention_dim);
        detail::from_config(cfg, "layers", bm.layers);
        detail::from_config(cfg, "epochs", bm.epochs);
        detail::from_config(cfg, "patience", bm.patience);
        detail::from_config(cfg, "lr", bm.learning_rate);
        detail::from_config(cfg, "batch", bm.batch);
        auto* cb = app.add_subcommand("benchmark", "train every variant on planted data");
        cb->add_option("--out", bm.out_dir, "working directory");
        cb->add_option("--seed", bm.seed, "benchmark seed");
        cb->add_option("--n-paths", bm.n_paths, "dataset size");
        cb->add_option("--hidden-dim", bm.hidden_dim, "LSTM hidden width");
        cb->add_option("--embed-dim", bm.embed_dim, "touchpoint embedding width");
        cb->add_option("--attention-dim", bm.attention_dim, "attention width");
        cb->add_option("--layers", bm.layers, "stacked LSTM layers");
        cb->add_option("--epochs", bm.epochs, "max training epochs");
        cb->add_option("--patience", bm.patience, "early-stopping patience");
        cb->add_option("--lr", bm.learning_rate, "Adam learning rate");
        cb->add_option("--batch", bm.batch, "minibatch size");

        // every subcommand also accepts --config so flag position is free
        for (auto* sub : {cg, ct, ce, ca, cb})
            sub->add_option("--config", config_file, "JSON file with option defaults");

        try {
            std::vector<std::string> reversed(args.rbegin(), args.rend());
            app.parse(reversed);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            for (auto* sub : {cg, ct, ce, ca, cb})
                if (sub->parsed()) out << sub->help();
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            err << "error: " << e.what() << "\n";
            return kExitUsage;
        }

        if (cg->parsed()) return cmd_generate(gen, out);
        if (ct->parsed()) return cmd_train(tr, out);
        if (ce->parsed()) return cmd_eval(ev, out);
        if (ca->parsed()) return cmd_attribute(at, out);
        if (cb->parsed()) return cmd_benchmark(bm, out);
        err << "error: no subcommand\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ModelIoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

inline int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(std::move(args), out, err);
}

} // namespace mta::cli
