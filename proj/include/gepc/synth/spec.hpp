#pragma once

// JSON description of a synthetic corpus:
//
//   {"seed": 7,
//    "patterns": ["walk", {"preset": "walk", "name": "fast", "frequency_scale": 3},
//                 {"name": "custom", "base": [[x, y], ...], "joints": [{"amp": [ax, ay], "frequency": f, "phase": p}, ...],
//                  "drift": [vx, vy], "noise": 0.01}],
//    "train": [{"prefix": "tr", "videos": 40, "segments": [{"pattern": "walk", "frames": 60}]}],
//    "test":  [{"prefix": "te", "videos": 5, "segments": [{"pattern": "walk", "frames": 50},
//                                                        {"pattern": "fast", "frames": 50, "abnormal": true}]}]}

#include "gepc/synth/generator.hpp"

namespace gepc {

struct SynthSpec {
    std::uint64_t seed = 0;
    std::vector<MotionPattern> patterns;
    std::vector<VideoGroup> train;
    std::vector<VideoGroup> test;
};

namespace detail {

template <class T>
T synth_field(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) throw ConfigError("synth spec field '" + path + "." + key + "': missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("synth spec field '" + path + "." + key + "': " + e.what());
    }
}

template <class T>
T synth_field_or(const json& j, const std::string& path, const char* key, T fallback) {
    return j.contains(key) ? synth_field<T>(j, path, key) : fallback;
}

inline MotionPattern pattern_from_json(const json& j, const std::string& path) {
    if (j.is_string()) return patterns::preset(j.get<std::string>());
    if (!j.is_object()) throw ConfigError("synth spec field '" + path + "': expected a preset name or an object");
    MotionPattern p;
    if (j.contains("preset")) {
        try {
            p = patterns::preset(synth_field<std::string>(j, path, "preset"));
        } catch (const ConfigError& e) {
            throw ConfigError("synth spec field '" + path + ".preset': " + e.what());
        }
        const real fs = synth_field_or<real>(j, path, "frequency_scale", 1);
        const real as = synth_field_or<real>(j, path, "amplitude_scale", 1);
        for (auto& jm : p.joints) {
            jm.frequency *= fs;
            jm.amp_x *= as;
            jm.amp_y *= as;
        }
    } else {
        const auto base = synth_field<std::vector<std::array<real, 2>>>(j, path, "base");
        p.base = base;
        const json& joints = j.contains("joints") ? j.at("joints") : json::array();
        if (!joints.is_array() || joints.size() != base.size())
            throw ConfigError("synth spec field '" + path + ".joints': expected " + std::to_string(base.size()) + " entries");
        for (std::size_t v = 0; v < joints.size(); ++v) {
            const std::string jp = path + ".joints[" + std::to_string(v) + "]";
            const auto amp = synth_field<std::array<real, 2>>(joints[v], jp, "amp");
            JointMotion m{amp[0], amp[1], synth_field<real>(joints[v], jp, "frequency"),
                          synth_field_or<real>(joints[v], jp, "phase", 0)};
            if (m.amp_x < 0 || m.amp_y < 0) throw ConfigError("synth spec field '" + jp + ".amp': must be >= 0");
            if (!(m.frequency > 0)) throw ConfigError("synth spec field '" + jp + ".frequency': must be > 0");
            p.joints.push_back(m);
        }
    }
    if (j.contains("name")) p.name = synth_field<std::string>(j, path, "name");
    if (j.contains("drift")) p.drift = synth_field<std::array<real, 2>>(j, path, "drift");
    if (j.contains("noise")) p.noise = synth_field<real>(j, path, "noise");
    if (p.noise < 0) throw ConfigError("synth spec field '" + path + ".noise': must be >= 0");
    return p;
}

inline std::vector<VideoGroup> groups_from_json(const json& j, const std::string& path,
                                                const std::vector<MotionPattern>& pats) {
    std::vector<VideoGroup> out;
    if (!j.is_array()) throw ConfigError("synth spec field '" + path + "': expected an array");
    for (std::size_t g = 0; g < j.size(); ++g) {
        const std::string gp = path + "[" + std::to_string(g) + "]";
        VideoGroup vg;
        vg.prefix = synth_field_or<std::string>(j[g], gp, "prefix", path + std::to_string(g));
        vg.videos = synth_field_or<std::size_t>(j[g], gp, "videos", 1);
        if (vg.videos == 0) throw ConfigError("synth spec field '" + gp + ".videos': must be >= 1");
        const json segs = synth_field<json>(j[g], gp, "segments");
        if (!segs.is_array() || segs.empty()) throw ConfigError("synth spec field '" + gp + ".segments': expected a non-empty array");
        for (std::size_t s = 0; s < segs.size(); ++s) {
            const std::string sp = gp + ".segments[" + std::to_string(s) + "]";
            const auto name = synth_field<std::string>(segs[s], sp, "pattern");
            std::size_t idx = pats.size();
            for (std::size_t i = 0; i < pats.size(); ++i)
                if (pats[i].name == name) idx = i;
            if (idx == pats.size()) throw ConfigError("synth spec field '" + sp + ".pattern': unknown pattern '" + name + "'");
            const auto frames = synth_field<std::size_t>(segs[s], sp, "frames");
            if (frames == 0) throw ConfigError("synth spec field '" + sp + ".frames': must be >= 1");
            vg.segments.push_back({idx, frames, synth_field_or<bool>(segs[s], sp, "abnormal", false)});
        }
        out.push_back(std::move(vg));
    }
    return out;
}

}  // namespace detail

inline SynthSpec synth_spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("synth spec: expected a JSON object");
    SynthSpec s;
    s.seed = detail::synth_field_or<std::uint64_t>(j, "spec", "seed", 0);
    const json pats = detail::synth_field<json>(j, "spec", "patterns");
    if (!pats.is_array() || pats.empty()) throw ConfigError("synth spec field 'patterns': expected a non-empty array");
    for (std::size_t i = 0; i < pats.size(); ++i) {
        const std::string path = "patterns[" + std::to_string(i) + "]";
        MotionPattern p;
        try {
            p = detail::pattern_from_json(pats[i], path);
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            if (msg.rfind("synth spec", 0) == 0) throw;
            throw ConfigError("synth spec field '" + path + "': " + msg);
        }
        try {
            p.validate(7);
        } catch (const ConfigError& e) {
            throw ConfigError("synth spec field '" + path + "': " + e.what());
        }
        for (const auto& q : s.patterns)
            if (q.name == p.name) throw ConfigError("synth spec field '" + path + ".name': duplicate pattern '" + p.name + "'");
        s.patterns.push_back(std::move(p));
    }
    if (j.contains("train")) s.train = detail::groups_from_json(j.at("train"), "train", s.patterns);
    if (j.contains("test")) s.test = detail::groups_from_json(j.at("test"), "test", s.patterns);
    return s;
}

/// Fully expanded form; parsing it back yields the same corpus.
inline json to_json(const MotionPattern& p) {
    json joints = json::array();
    for (const auto& m : p.joints)
        joints.push_back({{"amp", {m.amp_x, m.amp_y}}, {"frequency", m.frequency}, {"phase", m.phase}});
    return {{"name", p.name}, {"base", p.base}, {"joints", joints}, {"drift", p.drift}, {"noise", p.noise}};
}

inline json to_json(const SynthSpec& s) {
    auto groups = [&](const std::vector<VideoGroup>& gs) {
        json out = json::array();
        for (const auto& g : gs) {
            json segs = json::array();
            for (const auto& seg : g.segments)
                segs.push_back({{"pattern", s.patterns.at(seg.pattern).name}, {"frames", seg.frames}, {"abnormal", seg.abnormal}});
            out.push_back({{"prefix", g.prefix}, {"videos", g.videos}, {"segments", segs}});
        }
        return out;
    };
    json pats = json::array();
    for (const auto& p : s.patterns) pats.push_back(to_json(p));
    return {{"seed", s.seed}, {"patterns", pats}, {"train", groups(s.train)}, {"test", groups(s.test)}};
}

/// Train and test corpora draw from independent streams of the spec seed.
inline SynthCorpus generate_train(const SynthSpec& s) { return generate_corpus(s.patterns, s.train, derive_seed(s.seed, 0)); }
inline SynthCorpus generate_test(const SynthSpec& s) { return generate_corpus(s.patterns, s.test, derive_seed(s.seed, 1)); }

}  // namespace gepc
