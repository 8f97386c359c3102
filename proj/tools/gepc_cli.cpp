// gepc: synth | train | score | eval
//
// Exit codes: 0 ok, 2 configuration or data errors, 3 numeric failures,
// 1 anything else. GEPC_LOG_LEVEL (error|warn|info|debug) sets stderr
// verbosity; timestamps go to the log file in the output directory only.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gepc/eval/experiment.hpp"
#include "gepc/model/checkpoint.hpp"
#include "gepc/synth/spec.hpp"

using namespace gepc;
namespace fs = std::filesystem;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

const char* level_name(Level l) {
    switch (l) {
        case Level::error: return "error";
        case Level::warn: return "warn";
        case Level::info: return "info";
        default: return "debug";
    }
}

class Log {
public:
    Log() {
        const char* env = std::getenv("GEPC_LOG_LEVEL");
        const std::string v = env ? env : "info";
        if (v == "error") threshold_ = Level::error;
        else if (v == "warn") threshold_ = Level::warn;
        else if (v == "debug") threshold_ = Level::debug;
    }

    void open(const fs::path& path) { file_.open(path, std::ios::app); }

    void operator()(Level l, const std::string& msg) {
        if (l > threshold_) return;
        std::cerr << "[" << level_name(l) << "] " << msg << '\n';
        if (file_) {
            const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            std::tm tm{};
            gmtime_r(&now, &tm);
            file_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << " " << level_name(l) << " " << msg << '\n';
            file_.flush();
        }
    }

private:
    Level threshold_ = Level::info;
    std::ofstream file_;
};

Log logger;

struct Args {
    std::string config, out, data, checkpoint;
    std::uint64_t seed = 0;
    real lambda = 0, noise = 0;
    std::size_t clusters = 0;
    std::string method, branches;
    bool skip_pretrain = false, skip_finetune = false;
};

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("config '" + path + "': " + e.what(), 0);
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

fs::path prepare_out(const std::string& dir) {
    const fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
    fs::create_directories(p);
    return p;
}

std::string fixed(real v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

/// Config file overlaid by explicit flags.
ExperimentSpec resolve_spec(const Args& a, const CLI::App& cmd) {
    ExperimentSpec s;
    if (!a.config.empty()) s = experiment_spec_from_json(read_json(a.config));
    if (cmd.count("--seed")) s.seed = a.seed;
    if (cmd.count("--skip-pretrain")) s.pipeline.skip_pretrain = a.skip_pretrain;
    if (cmd.count("--skip-finetune")) s.pipeline.skip_finetune = a.skip_finetune;
    if (cmd.count("--lambda")) s.model.lambda = a.lambda;
    if (cmd.count("--clusters")) s.model.clusters = a.clusters;
    if (cmd.count("--method")) s.method = score_method_from_string(a.method);
    if (cmd.count("--noise")) s.noise = a.noise;
    if (cmd.count("--branches")) s.model.branches = BranchMask::parse(a.branches);
    s.model.seed = s.seed;
    s.validate();
    for (const auto& w : s.model.warnings()) logger(Level::warn, w);
    return s;
}

std::vector<PoseSequence> load_matching(const std::string& path, const SkeletonLayout& layout) {
    PoseFile f = load_pose_jsonl(path);
    detail::check_layout(f.layout, layout, path);
    return std::move(f.sequences);
}

EpochCallback epoch_logger() {
    return [](const EpochStats& s) {
        std::string msg = "epoch " + std::to_string(s.epoch) + " reconstruction " + fixed(s.reconstruction, 6);
        if (s.clustering) msg += " clustering " + fixed(*s.clustering, 6);
        if (s.entropy) msg += " assignment entropy " + fixed(*s.entropy, 4);
        logger(Level::info, msg);
    };
}

json pipeline_report(const TrainedPipeline& t, std::size_t windows, std::size_t injected) {
    json mix = nullptr;
    if (t.mixture) mix = {{"components", t.mixture->components()}, {"weights", t.mixture->weights}, {"alpha", t.mixture->alpha}};
    return {{"train_windows", windows},
            {"injected_windows", injected},
            {"pretrain", to_json(t.pretrain)},
            {"finetune", to_json(t.finetune)},
            {"mixture", mix}};
}

int cmd_synth(const Args& a, const CLI::App& cmd) {
    if (a.config.empty()) throw ConfigError("synth: --config is required");
    SynthSpec s = synth_spec_from_json(read_json(a.config));
    if (cmd.count("--seed")) s.seed = a.seed;
    const fs::path out = prepare_out(a.out);
    logger.open(out / "gepc.log");
    write_json(out / "effective_config.json", to_json(s));
    if (!s.train.empty()) {
        write_corpus(generate_train(s), (out / "train.jsonl").string(), (out / "train_labels.json").string());
        logger(Level::info, "wrote " + (out / "train.jsonl").string());
    }
    if (!s.test.empty()) {
        write_corpus(generate_test(s), (out / "test.jsonl").string(), (out / "test_labels.json").string());
        logger(Level::info, "wrote " + (out / "test.jsonl").string());
    }
    return 0;
}

int cmd_train(const Args& a, const CLI::App& cmd) {
    ExperimentSpec s = resolve_spec(a, cmd);
    if (!a.data.empty()) s.train_path = a.data;
    if (s.train_path.empty()) throw ConfigError("train: no training data (--data or config field 'train')");
    const fs::path out = prepare_out(a.out);
    logger.open(out / "gepc.log");
    write_json(out / "effective_config.json", to_json(s));

    std::vector<Window> windows = make_windows(load_matching(s.train_path, s.model.layout), s.model);
    if (windows.empty()) throw SchemaError("train: '" + s.train_path + "' yields no windows");
    std::size_t injected = 0;
    if (s.noise > 0) {
        if (s.noise_pool_path.empty()) throw ConfigError("config field 'noise_pool': required when noise > 0");
        const std::size_t n = windows.size();
        windows = inject_noise(std::move(windows), make_windows(load_matching(s.noise_pool_path, s.model.layout), s.model),
                               s.noise, derive_seed(s.seed, 4));
        injected = static_cast<std::size_t>(std::floor(s.noise * static_cast<real>(n) + real(1e-9)));
    }
    logger(Level::info, std::to_string(windows.size()) + " training windows");
    TrainedPipeline t = train_pipeline(windows, s.model, s.pipeline, epoch_logger());
    const json prov = {{"command", "train"}, {"spec_hash", spec_hash(s)}, {"seed", s.seed}};
    save_checkpoint((out / "checkpoint.gepc").string(), *t.model, t.mixture ? &*t.mixture : nullptr, prov);
    write_json(out / "train_report.json", pipeline_report(t, windows.size(), injected));
    logger(Level::info, "wrote " + (out / "checkpoint.gepc").string());
    return 0;
}

int cmd_score(const Args& a, const CLI::App& cmd) {
    if (a.checkpoint.empty()) throw ConfigError("score: --checkpoint is required");
    if (a.data.empty()) throw ConfigError("score: --data is required");
    ExperimentSpec s;
    if (!a.config.empty()) s = experiment_spec_from_json(read_json(a.config));
    if (cmd.count("--method")) s.method = score_method_from_string(a.method);

    Checkpoint ck = load_checkpoint(a.checkpoint);
    if (s.method == ScoreMethod::dirichlet && !ck.mixture)
        throw ConfigError("score: checkpoint has no Dirichlet mixture; use --method max");
    ModelConfig cfg = ck.model->config();
    if (s.test_window_stride) cfg.window_stride = s.test_window_stride;

    const fs::path out = prepare_out(a.out);
    logger.open(out / "gepc.log");
    write_json(out / "effective_config.json", {{"checkpoint", a.checkpoint},
                                               {"data", a.data},
                                               {"method", to_string(s.method)},
                                               {"window_stride", cfg.window_stride},
                                               {"eval_flip_average", s.eval_flip_average},
                                               {"model", to_json(cfg)}});

    const auto seqs = load_matching(a.data, cfg.layout);
    const auto windows = make_windows(seqs, cfg);
    const auto scores = score_windows(*ck.model, ck.mixture ? &*ck.mixture : nullptr, windows, s.method, s.eval_flip_average);
    std::vector<WindowScore> ws;
    for (std::size_t i = 0; i < windows.size(); ++i)
        ws.push_back({windows[i].video_id, windows[i].person_id, windows[i].start_frame, windows[i].valid_frames, scores[i]});
    std::map<std::string, std::size_t> counts;
    for (const auto& q : seqs) {
        const auto end = q.start_frame + static_cast<std::int64_t>(q.length());
        if (end > 0) counts[q.video_id] = std::max(counts[q.video_id], static_cast<std::size_t>(end));
    }
    write_scores_csv((out / "scores.csv").string(), aggregate_frame_scores(ws, counts));
    logger(Level::info, "scored " + std::to_string(windows.size()) + " windows");
    return 0;
}

int cmd_eval(const Args& a, const CLI::App& cmd) {
    const ExperimentSpec s = resolve_spec(a, cmd);
    const fs::path run = prepare_out(a.out) / ("run-" + spec_hash(s));
    fs::create_directories(run);
    logger.open(run / "gepc.log");
    write_json(run / "effective_config.json", to_json(s));
    logger(Level::info, std::string(to_string(s.mode)) + " evaluation in " + run.string());

    const ExperimentData d = load_experiment_data(s);
    ExperimentResult r = run_experiment(s, d, epoch_logger());
    write_json(run / "roc.json", to_json(r.roc));
    write_json(run / "train_report.json", pipeline_report(r.trained, r.train_windows, r.injected));
    const json prov = {{"command", "eval"}, {"spec_hash", spec_hash(s)}, {"seed", s.seed}};
    save_checkpoint((run / "checkpoint.gepc").string(), *r.trained.model,
                    r.trained.mixture ? &*r.trained.mixture : nullptr, prov);
    if (s.mode == ExperimentMode::fine) {
        write_scores_csv((run / "scores.csv").string(), r.frame_normality);
    } else {
        std::ofstream csv(run / "clip_scores.csv");
        csv << "video_id,score\n" << std::setprecision(std::numeric_limits<real>::max_digits10);
        for (const auto& [vid, n] : r.clip_normality) csv << vid << ',' << -n + real(0) << '\n';
    }
    std::cout << "AUC " << fixed(r.roc.auc, 3) << '\n' << run.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pose-graph anomaly detection: synthetic data, training, scoring, evaluation"};
    app.require_subcommand(1);
    Args a;

    auto common = [&](CLI::App* c) {
        c->add_option("--config", a.config, "JSON config file");
        c->add_option("--seed", a.seed, "random seed (overrides the config)");
        c->add_option("--out", a.out, "output directory (created if missing)");
    };
    auto model_flags = [&](CLI::App* c) {
        c->add_flag("--skip-pretrain", a.skip_pretrain, "skip autoencoder pretraining");
        c->add_flag("--skip-finetune", a.skip_finetune, "skip clustering fine-tuning");
        c->add_option("--lambda", a.lambda, "clustering loss weight");
        c->add_option("--clusters", a.clusters, "number of clusters K");
        c->add_option("--method", a.method, "normality scorer: dirichlet|max");
        c->add_option("--noise", a.noise, "fraction of training windows replaced from the noise pool");
        c->add_option("--branches", a.branches, "enabled SAGC branches, e.g. abc, a, ac");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic pose corpus");
    common(synth);
    auto* train = app.add_subcommand("train", "train a model and fit the normality mixture");
    common(train);
    model_flags(train);
    train->add_option("--data", a.data, "training pose JSONL (overrides config field 'train')");
    auto* score = app.add_subcommand("score", "score pose data with a checkpoint");
    common(score);
    score->add_option("--checkpoint", a.checkpoint, "checkpoint file");
    score->add_option("--data", a.data, "pose JSONL to score");
    score->add_option("--method", a.method, "normality scorer: dirichlet|max");
    auto* eval = app.add_subcommand("eval", "run a full experiment and report ROC/AUC");
    common(eval);
    model_flags(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(a, *synth);
        if (train->parsed()) return cmd_train(a, *train);
        if (score->parsed()) return cmd_score(a, *score);
        return cmd_eval(a, *eval);
    } catch (const NumericError& e) {
        logger(Level::error, e.what());
        return 3;
    } catch (const DegenerateFitError& e) {
        logger(Level::error, e.what());
        return 3;
    } catch (const Error& e) {
        logger(Level::error, e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        logger(Level::error, e.what());
        return 2;
    } catch (const std::exception& e) {
        logger(Level::error, e.what());
        return 1;
    }
}
