#pragma once

// Synthetic pose corpora: stick figures whose joints follow sinusoids plus
// drift and truncated Gaussian jitter. Patterns differ in frequency,
// amplitude and posture, so normal/abnormal structure is known exactly.

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gepc/pose/io.hpp"

namespace gepc {

struct JointMotion {
    real amp_x = 0;
    real amp_y = 0;
    real frequency = real(0.1);  // cycles per frame
    real phase = 0;              // radians
};

struct MotionPattern {
    std::string name;
    std::vector<std::array<real, 2>> base;  // V rest positions
    std::vector<JointMotion> joints;        // V oscillators
    std::array<real, 2> drift{0, 0};        // per frame
    real noise = real(0.01);                // jitter σ, truncated at 6σ

    void validate(std::size_t joints_expected) const {
        if (base.size() != joints_expected || joints.size() != joints_expected)
            throw ConfigError("pattern '" + name + "': expected " + std::to_string(joints_expected) + " joints");
        for (const auto& j : joints) {
            if (j.amp_x < 0 || j.amp_y < 0) throw ConfigError("pattern '" + name + "': amplitude must be >= 0");
            if (!(j.frequency > 0)) throw ConfigError("pattern '" + name + "': frequency must be > 0");
        }
        if (noise < 0) throw ConfigError("pattern '" + name + "': noise must be >= 0");
    }

    /// max |coordinate| over a sequence of T frames.
    real coordinate_bound(std::size_t t) const {
        real b = 0;
        for (std::size_t v = 0; v < base.size(); ++v)
            for (int d = 0; d < 2; ++d) {
                const real amp = d == 0 ? joints[v].amp_x : joints[v].amp_y;
                b = std::max(b, std::abs(base[v][d]) + amp + 6 * noise + std::abs(drift[d]) * static_cast<real>(t));
            }
        return b;
    }
};

namespace patterns {

// stick7 joints: head, neck, l_hand, r_hand, pelvis, l_foot, r_foot (y down)
inline std::vector<std::array<real, 2>> stick7_rest() {
    return {{0, -1.6}, {0, -1.2}, {-0.5, -0.4}, {0.5, -0.4}, {0, 0}, {-0.25, 1.0}, {0.25, 1.0}};
}

inline MotionPattern still(const std::string& name, real frequency) {
    MotionPattern p{name, stick7_rest(), std::vector<JointMotion>(7), {0, 0}, real(0.01)};
    for (auto& j : p.joints) j.frequency = frequency;
    return p;
}

/// Arms and legs swing in anti-phase.
inline MotionPattern walk(real frequency = real(0.08)) {
    MotionPattern p = still("walk", frequency);
    const real pi = std::numbers::pi_v<real>;
    p.joints[2] = {0.2, 0.05, frequency, 0};
    p.joints[3] = {0.2, 0.05, frequency, pi};
    p.joints[5] = {0.3, 0.1, frequency, pi};
    p.joints[6] = {0.3, 0.1, frequency, 0};
    p.joints[0] = {0.02, 0.04, frequency, 0};
    return p;
}

/// Faster, wider stride with the upper body leaning forward.
inline MotionPattern run() {
    MotionPattern p = walk(real(0.25));
    p.name = "run";
    for (std::size_t v : {2u, 3u, 5u, 6u}) {
        p.joints[v].amp_x *= real(1.4);
        p.joints[v].amp_y *= real(1.4);
    }
    p.base[0][0] += real(0.35);
    p.base[1][0] += real(0.25);
    p.base[2] = {-0.2, -0.7};
    p.base[3] = {0.7, -0.6};
    return p;
}

/// Right hand waves overhead.
inline MotionPattern wave() {
    MotionPattern p = still("wave", real(0.15));
    p.base[3] = {0.6, -1.9};
    p.joints[3] = {0.35, 0.15, real(0.15), 0};
    return p;
}

/// Knees bend: upper body and hands move vertically.
inline MotionPattern squat() {
    MotionPattern p = still("squat", real(0.06));
    p.base[2] = {-0.6, -0.8};
    p.base[3] = {0.6, -0.8};
    for (std::size_t v : {0u, 1u, 2u, 3u, 4u}) p.joints[v] = {0, 0.3, real(0.06), 0};
    return p;
}

/// Whole body bounces with arms raised.
inline MotionPattern jump() {
    MotionPattern p = still("jump", real(0.12));
    p.base[2] = {-0.7, -1.7};
    p.base[3] = {0.7, -1.7};
    for (auto& j : p.joints) j = {0, 0.35, real(0.12), 0};
    return p;
}

/// Right leg kicks forward and up.
inline MotionPattern kick() {
    MotionPattern p = still("kick", real(0.1));
    p.base[6] = {0.6, 0.6};
    p.joints[6] = {0.45, 0.3, real(0.1), 0};
    p.joints[2] = {0.15, 0, real(0.1), std::numbers::pi_v<real>};
    return p;
}

/// Hands meet in front of the chest.
inline MotionPattern clap() {
    MotionPattern p = still("clap", real(0.2));
    p.base[2] = {-0.3, -1.0};
    p.base[3] = {0.3, -1.0};
    p.joints[2] = {0.25, 0, real(0.2), 0};
    p.joints[3] = {0.25, 0, real(0.2), std::numbers::pi_v<real>};
    return p;
}

inline MotionPattern preset(const std::string& name) {
    if (name == "walk") return walk();
    if (name == "run") return run();
    if (name == "wave") return wave();
    if (name == "squat") return squat();
    if (name == "jump") return jump();
    if (name == "kick") return kick();
    if (name == "clap") return clap();
    throw ConfigError("unknown motion preset '" + name + "'");
}

}  // namespace patterns

/// One person performing `segments` back to back; the returned labels flag
/// frames of abnormal segments.
struct Segment {
    std::size_t pattern = 0;
    std::size_t frames = 0;
    bool abnormal = false;
};

/// Samples one sequence. A random phase offset is drawn per sequence and
/// kept across segments.
inline PoseSequence generate_sequence(const std::vector<MotionPattern>& pats, const std::vector<Segment>& segments,
                                      const std::string& video_id, Rng& rng, std::vector<int>* labels = nullptr) {
    std::size_t total = 0;
    for (const auto& s : segments) {
        if (s.pattern >= pats.size()) throw ConfigError("segment references unknown pattern");
        total += s.frames;
    }
    const std::size_t nv = pats.at(0).base.size();
    PoseSequence seq{video_id, "0", 0, Tensor({total, nv, 3}), Tensor({total, nv}, real{1})};
    std::uniform_real_distribution<real> phase(0, 2 * std::numbers::pi_v<real>);
    std::normal_distribution<real> gauss(0, 1);
    const real offset = phase(rng);
    std::size_t t = 0;
    for (const auto& s : segments) {
        const MotionPattern& p = pats[s.pattern];
        for (std::size_t r = 0; r < s.frames; ++r, ++t) {
            const real tt = static_cast<real>(t);
            for (std::size_t v = 0; v < nv; ++v) {
                const JointMotion& j = p.joints[v];
                const real arg = 2 * std::numbers::pi_v<real> * j.frequency * tt + j.phase + offset;
                real nx = std::clamp(gauss(rng), real(-6), real(6)) * p.noise;
                real ny = std::clamp(gauss(rng), real(-6), real(6)) * p.noise;
                seq.frames.at(t, v, 0) = p.base[v][0] + j.amp_x * std::sin(arg) + p.drift[0] * tt + nx;
                seq.frames.at(t, v, 1) = p.base[v][1] + j.amp_y * std::cos(arg) + p.drift[1] * tt + ny;
                seq.frames.at(t, v, 2) = 1;
            }
            if (labels) labels->push_back(s.abnormal ? 1 : 0);
        }
    }
    return seq;
}

/// A group of videos sharing one segment script.
struct VideoGroup {
    std::string prefix;
    std::size_t videos = 1;
    std::vector<Segment> segments;
};

struct SynthCorpus {
    SkeletonLayout layout;
    std::vector<PoseSequence> sequences;
    GroundTruth labels;
    std::map<std::string, std::string> generator;  // video -> pattern name of its first segment
};

inline SynthCorpus generate_corpus(const std::vector<MotionPattern>& pats, const std::vector<VideoGroup>& groups,
                                   std::uint64_t seed, const SkeletonLayout& layout = layouts::stick7()) {
    if (pats.empty()) throw ConfigError("synthetic corpus: no patterns");
    for (const auto& p : pats) p.validate(layout.joints);
    SynthCorpus c{layout, {}, {}, {}};
    Rng rng(seed);
    for (const auto& g : groups)
        for (std::size_t i = 0; i < g.videos; ++i) {
            const std::string id = g.prefix + "_" + std::to_string(i);
            std::vector<int> labels;
            c.sequences.push_back(generate_sequence(pats, g.segments, id, rng, &labels));
            int any = 0;
            for (int l : labels) any |= l;
            c.labels.frame_labels[id] = std::move(labels);
            c.labels.clip_labels[id] = any;
            c.generator[id] = g.segments.empty() ? "" : pats[g.segments[0].pattern].name;
        }
    return c;
}

/// Pose file plus ground-truth sidecar next to it.
inline void write_corpus(const SynthCorpus& c, const std::string& pose_path, const std::string& labels_path) {
    write_pose_jsonl(pose_path, c.layout, c.sequences);
    std::ofstream out(labels_path);
    if (!out) throw Error("cannot write '" + labels_path + "'");
    json j = ground_truth_to_json(c.labels);
    j["generator"] = c.generator;
    out << j.dump(2) << '\n';
}

}  // namespace gepc
