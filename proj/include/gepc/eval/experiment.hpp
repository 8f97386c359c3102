#pragma once

// End-to-end experiments: pretrain, cluster, fine-tune, fit the normality
// model on training assignments, score test windows and compute ROC/AUC per
// frame (fine) or per clip (coarse).

#include <cstdio>
#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gepc/cluster/dec.hpp"
#include "gepc/eval/roc.hpp"
#include "gepc/pose/io.hpp"
#include "gepc/score/aggregate.hpp"
#include "gepc/score/dirichlet.hpp"

namespace gepc {

enum class ExperimentMode { fine, coarse };

inline ExperimentMode experiment_mode_from_string(const std::string& s) {
    if (s == "fine") return ExperimentMode::fine;
    if (s == "coarse") return ExperimentMode::coarse;
    throw ConfigError("unknown experiment mode '" + s + "' (expected fine or coarse)");
}

inline const char* to_string(ExperimentMode m) { return m == ExperimentMode::fine ? "fine" : "coarse"; }

struct PipelineOptions {
    bool skip_pretrain = false;
    bool skip_finetune = false;
    MixtureOptions mixture;
};

struct ExperimentSpec {
    ExperimentMode mode = ExperimentMode::fine;
    std::string train_path;
    std::string test_path;
    std::string test_labels_path;
    std::string noise_pool_path;
    ModelConfig model;
    PipelineOptions pipeline;
    ScoreMethod method = ScoreMethod::dirichlet;
    real noise = 0;
    std::uint64_t seed = 0;
    std::size_t test_window_stride = 0;  // 0 = model.window_stride
    bool eval_flip_average = false;

    void validate() const {
        model.validate();
        if (!(noise >= 0 && noise <= real(0.5))) throw ConfigError("experiment field 'noise': must lie in [0, 0.5]");
    }
};

inline json to_json(const MixtureOptions& m) {
    return {{"initial_components", m.initial_components},
            {"prune_threshold", m.prune_threshold},
            {"max_iterations", m.max_iterations},
            {"tolerance", m.tolerance},
            {"alpha_iterations", m.alpha_iterations},
            {"trial_iterations", m.trial_iterations},
            {"bic_elimination", m.bic_elimination}};
}

inline MixtureOptions mixture_options_from_json(const json& j, MixtureOptions m = {}) {
    if (!j.is_object()) throw ConfigError("config field 'mixture': expected an object");
    detail::reject_unknown(j, {"initial_components", "prune_threshold", "max_iterations", "tolerance", "alpha_iterations",
                               "trial_iterations", "bic_elimination"},
                           "mixture.");
    detail::read_field(j, "initial_components", m.initial_components, "mixture.");
    detail::read_field(j, "prune_threshold", m.prune_threshold, "mixture.");
    detail::read_field(j, "max_iterations", m.max_iterations, "mixture.");
    detail::read_field(j, "tolerance", m.tolerance, "mixture.");
    detail::read_field(j, "alpha_iterations", m.alpha_iterations, "mixture.");
    detail::read_field(j, "trial_iterations", m.trial_iterations, "mixture.");
    detail::read_field(j, "bic_elimination", m.bic_elimination, "mixture.");
    if (m.initial_components == 0) throw ConfigError("config field 'mixture.initial_components': must be >= 1");
    return m;
}

/// The spec seed is authoritative; the nested model seed always mirrors it.
inline json to_json(const ExperimentSpec& s) {
    ModelConfig model = s.model;
    model.seed = s.seed;
    return {{"mode", to_string(s.mode)},
            {"train", s.train_path},
            {"test", s.test_path},
            {"test_labels", s.test_labels_path},
            {"noise_pool", s.noise_pool_path},
            {"model", to_json(model)},
            {"skip_pretrain", s.pipeline.skip_pretrain},
            {"skip_finetune", s.pipeline.skip_finetune},
            {"mixture", to_json(s.pipeline.mixture)},
            {"method", to_string(s.method)},
            {"noise", s.noise},
            {"seed", s.seed},
            {"test_window_stride", s.test_window_stride},
            {"eval_flip_average", s.eval_flip_average}};
}

inline ExperimentSpec experiment_spec_from_json(const json& j, ExperimentSpec s = {}) {
    if (!j.is_object()) throw ConfigError("experiment spec: expected a JSON object");
    detail::reject_unknown(j, {"mode", "train", "test", "test_labels", "noise_pool", "model", "skip_pretrain", "skip_finetune",
                               "mixture", "method", "noise", "seed", "test_window_stride", "eval_flip_average"},
                           "");
    if (j.contains("mode")) {
        std::string m;
        detail::read_field(j, "mode", m);
        s.mode = experiment_mode_from_string(m);
    }
    detail::read_field(j, "train", s.train_path);
    detail::read_field(j, "test", s.test_path);
    detail::read_field(j, "test_labels", s.test_labels_path);
    detail::read_field(j, "noise_pool", s.noise_pool_path);
    if (j.contains("model")) s.model = model_config_from_json(j.at("model"), s.model);
    detail::read_field(j, "skip_pretrain", s.pipeline.skip_pretrain);
    detail::read_field(j, "skip_finetune", s.pipeline.skip_finetune);
    if (j.contains("mixture")) s.pipeline.mixture = mixture_options_from_json(j.at("mixture"), s.pipeline.mixture);
    if (j.contains("method")) {
        std::string m;
        detail::read_field(j, "method", m);
        s.method = score_method_from_string(m);
    }
    detail::read_field(j, "noise", s.noise);
    detail::read_field(j, "seed", s.seed);
    detail::read_field(j, "test_window_stride", s.test_window_stride);
    detail::read_field(j, "eval_flip_average", s.eval_flip_average);
    s.model.seed = s.seed;
    s.validate();
    return s;
}

/// FNV-1a over the canonical JSON of the spec, as 16 hex digits.
inline std::string spec_hash(const ExperimentSpec& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_json(s).dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Replaces floor(fraction · N) randomly chosen training windows with
/// distinct windows drawn from the abnormal pool.
inline std::vector<Window> inject_noise(std::vector<Window> train, const std::vector<Window>& pool, real fraction,
                                        std::uint64_t seed) {
    if (!(fraction >= 0 && fraction <= real(0.5))) throw ConfigError("inject_noise: fraction must lie in [0, 0.5]");
    const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<real>(train.size()) + real(1e-9)));
    if (n == 0) return train;
    if (pool.size() < n)
        throw ConfigError("inject_noise: pool has " + std::to_string(pool.size()) + " windows, " + std::to_string(n) +
                          " needed");
    Rng rng(seed);
    std::vector<std::size_t> slots(train.size()), picks(pool.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    std::shuffle(slots.begin(), slots.end(), rng);
    std::shuffle(picks.begin(), picks.end(), rng);
    for (std::size_t i = 0; i < n; ++i) train[slots[i]] = pool[picks[i]];
    return train;
}

/// For each cluster, the indices of the `n` rows with the highest p_ik.
inline std::vector<std::vector<std::size_t>> nearest_to_centroids(const Tensor& p, std::size_t n) {
    const std::size_t rows = p.dim(0), k = p.dim(1);
    std::vector<std::vector<std::size_t>> out(k);
    if (n == 0) return out;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<std::size_t> idx(rows);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const std::size_t m = std::min(n, rows);
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                          [&](std::size_t a, std::size_t b) {
                              return p.at(a, c) != p.at(b, c) ? p.at(a, c) > p.at(b, c) : a < b;
                          });
        out[c].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> nearest_to_centroids(Stgcae& model, const std::vector<Window>& windows,
                                                                  std::size_t n) {
    return nearest_to_centroids(assign_all(model, windows), n);
}

struct TrainedPipeline {
    std::unique_ptr<Stgcae> model;
    std::optional<DirichletMixture> mixture;
    TrainReport pretrain;
    TrainReport finetune;
};

/// Training stages in order; the model seed comes from `cfg.seed`.
inline TrainedPipeline train_pipeline(const std::vector<Window>& train, const ModelConfig& cfg,
                                      const PipelineOptions& opt, const EpochCallback& on_epoch = {}) {
    TrainedPipeline t;
    t.model = std::make_unique<Stgcae>(cfg);
    Rng train_rng(derive_seed(cfg.seed, 1));
    Rng cluster_rng(derive_seed(cfg.seed, 2));
    if (!opt.skip_pretrain) t.pretrain = pretrain(*t.model, train, cfg.train.pretrain_epochs, train_rng, on_epoch);
    init_clusters(*t.model, train, cluster_rng);
    if (!opt.skip_finetune) t.finetune = finetune(*t.model, train, cfg.train.finetune_epochs, train_rng, on_epoch);
    MixtureOptions mo = opt.mixture;
    mo.seed = derive_seed(cfg.seed, 3);
    t.mixture = fit_mixture(rows_of(assign_all(*t.model, train)), mo).mixture;
    return t;
}

/// Normality per window; with `flip_average` the score of the mirrored
/// window is averaged in.
inline std::vector<real> score_windows(Stgcae& model, const DirichletMixture* mixture, const std::vector<Window>& windows,
                                       ScoreMethod method, bool flip_average = false) {
    std::vector<real> out;
    out.reserve(windows.size());
    for (const auto& p : rows_of(assign_all(model, windows))) out.push_back(normality_score(p, mixture, method));
    if (flip_average && model.config().layout.can_flip()) {
        std::vector<Window> flipped;
        for (const auto& w : windows) flipped.push_back(flip_window(w, model.config().layout));
        const auto rows = rows_of(assign_all(model, flipped));
        for (std::size_t i = 0; i < rows.size(); ++i) out[i] = (out[i] + normality_score(rows[i], mixture, method)) / 2;
    }
    return out;
}

struct ExperimentData {
    std::vector<PoseSequence> train;
    std::vector<PoseSequence> test;
    std::vector<PoseSequence> noise_pool;
    GroundTruth test_labels;
};

struct ExperimentResult {
    RocReport roc;
    TrainedPipeline trained;
    std::vector<WindowScore> window_scores;
    FrameScores frame_normality;             // fine mode
    std::map<std::string, real> clip_normality;  // coarse mode
    std::size_t train_windows = 0;
    std::size_t injected = 0;
};

namespace detail {

inline void check_layout(const SkeletonLayout& file, const SkeletonLayout& model, const std::string& path) {
    if (file.joints != model.joints || file.channels != model.channels)
        throw SchemaError("'" + path + "': layout '" + file.name + "' (V=" + std::to_string(file.joints) + ", C=" +
                          std::to_string(file.channels) + ") does not match model layout '" + model.name + "'");
}

}  // namespace detail

inline ExperimentData load_experiment_data(const ExperimentSpec& s) {
    ExperimentData d;
    auto load = [&](const std::string& path) {
        PoseFile f = load_pose_jsonl(path);
        detail::check_layout(f.layout, s.model.layout, path);
        return std::move(f.sequences);
    };
    if (s.train_path.empty() || s.test_path.empty() || s.test_labels_path.empty())
        throw ConfigError("experiment spec: train, test and test_labels paths are required");
    d.train = load(s.train_path);
    d.test = load(s.test_path);
    d.test_labels = load_ground_truth(s.test_labels_path);
    if (s.noise > 0) {
        if (s.noise_pool_path.empty()) throw ConfigError("experiment field 'noise_pool': required when noise > 0");
        d.noise_pool = load(s.noise_pool_path);
    }
    return d;
}

/// Shared front half: windows, optional contamination, training, test scoring.
inline ExperimentResult train_and_score(const ExperimentSpec& s, const ExperimentData& d, const EpochCallback& on_epoch,
                                        std::vector<Window>& test_windows) {
    s.validate();
    ModelConfig cfg = s.model;
    cfg.seed = s.seed;
    ExperimentResult r;
    std::vector<Window> train = make_windows(d.train, cfg);
    if (train.empty()) throw SchemaError("experiment: training set yields no windows");
    if (s.noise > 0) {
        const auto before = train;
        train = inject_noise(std::move(train), make_windows(d.noise_pool, cfg), s.noise, derive_seed(s.seed, 4));
        r.injected = static_cast<std::size_t>(std::floor(s.noise * static_cast<real>(before.size()) + real(1e-9)));
    }
    r.train_windows = train.size();
    r.trained = train_pipeline(train, cfg, s.pipeline, on_epoch);

    ModelConfig test_cfg = cfg;
    if (s.test_window_stride) test_cfg.window_stride = s.test_window_stride;
    test_windows = make_windows(d.test, test_cfg);
    if (test_windows.empty()) throw SchemaError("experiment: test set yields no windows");
    const DirichletMixture* mix = r.trained.mixture ? &*r.trained.mixture : nullptr;
    const auto scores = score_windows(*r.trained.model, mix, test_windows, s.method, s.eval_flip_average);
    for (std::size_t i = 0; i < test_windows.size(); ++i) {
        const Window& w = test_windows[i];
        r.window_scores.push_back({w.video_id, w.person_id, w.start_frame, w.valid_frames, scores[i]});
    }
    return r;
}

inline RocReport frame_level_auc(const FrameScores& normality, const GroundTruth& gt) {
    std::vector<real> scores;
    std::vector<int> labels;
    for (const auto& [vid, lab] : gt.frame_labels) {
        const auto& series = normality.at(vid);
        for (std::size_t f = 0; f < lab.size(); ++f) {
            scores.push_back(-series[f]);
            labels.push_back(lab[f]);
        }
    }
    return roc_auc(scores, labels);
}

inline ExperimentResult run_fine_grained(const ExperimentSpec& s, const ExperimentData& d,
                                         const EpochCallback& on_epoch = {}) {
    if (d.test_labels.frame_labels.empty()) throw SchemaError("fine-grained evaluation needs frame labels");
    std::vector<Window> test;
    ExperimentResult r = train_and_score(s, d, on_epoch, test);
    std::map<std::string, std::size_t> counts;
    for (const auto& [vid, lab] : d.test_labels.frame_labels) counts[vid] = lab.size();
    r.frame_normality = aggregate_frame_scores(r.window_scores, counts);
    r.roc = frame_level_auc(r.frame_normality, d.test_labels);
    return r;
}

/// Clip normality: mean over each person's windows, least normal person wins.
inline std::map<std::string, real> clip_scores(const std::vector<WindowScore>& windows) {
    std::map<std::string, std::map<std::string, std::pair<real, std::size_t>>> acc;
    for (const auto& w : windows) {
        auto& a = acc[w.video_id][w.person_id];
        a.first += w.score;
        ++a.second;
    }
    std::map<std::string, real> out;
    for (const auto& [vid, persons] : acc) {
        real m = std::numeric_limits<real>::infinity();
        for (const auto& [pid, a] : persons) m = std::min(m, a.first / static_cast<real>(a.second));
        out[vid] = m;
    }
    return out;
}

inline ExperimentResult run_coarse_grained(const ExperimentSpec& s, const ExperimentData& d,
                                           const EpochCallback& on_epoch = {}) {
    if (d.test_labels.clip_labels.empty()) throw SchemaError("coarse-grained evaluation needs clip labels");
    std::vector<Window> test;
    ExperimentResult r = train_and_score(s, d, on_epoch, test);
    r.clip_normality = clip_scores(r.window_scores);
    std::vector<real> present;
    for (const auto& [vid, v] : r.clip_normality) present.push_back(v);
    const real fill = median(present);
    std::vector<real> scores;
    std::vector<int> labels;
    for (const auto& [vid, lab] : d.test_labels.clip_labels) {
        auto it = r.clip_normality.find(vid);
        scores.push_back(-(it == r.clip_normality.end() ? fill : it->second));
        labels.push_back(lab);
    }
    r.roc = roc_auc(scores, labels);
    return r;
}

inline ExperimentResult run_experiment(const ExperimentSpec& s, const ExperimentData& d,
                                       const EpochCallback& on_epoch = {}) {
    return s.mode == ExperimentMode::fine ? run_fine_grained(s, d, on_epoch) : run_coarse_grained(s, d, on_epoch);
}

}  // namespace gepc
