#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gepc/core/init.hpp"
#include "gepc/pose/sequence.hpp"

namespace gepc {

enum class NormalizeMode { global, per_window };

inline NormalizeMode normalize_mode_from_string(const std::string& s) {
    if (s == "global") return NormalizeMode::global;
    if (s == "per_window") return NormalizeMode::per_window;
    throw ConfigError("unknown normalization mode '" + s + "'");
}

inline const char* to_string(NormalizeMode m) { return m == NormalizeMode::global ? "global" : "per_window"; }

namespace detail {

/// Centers coordinates on the mean of visible joints and divides by the
/// largest absolute deviation over all coordinate dims. Joints with zero
/// confidence are set to 0. `coord(i, d)` addresses point i, dim d.
template <class Coord>
void normalize_points(std::size_t points, std::size_t dims, const Tensor& conf, Coord&& coord) {
    if (dims == 0) return;
    std::vector<real> mean(dims, 0);
    std::size_t visible = 0;
    for (std::size_t i = 0; i < points; ++i) {
        if (conf[i] <= 0) continue;
        ++visible;
        for (std::size_t d = 0; d < dims; ++d) mean[d] += coord(i, d);
    }
    if (visible) for (auto& m : mean) m /= static_cast<real>(visible);
    real extent = 0;
    for (std::size_t i = 0; i < points; ++i) {
        if (conf[i] <= 0) continue;
        for (std::size_t d = 0; d < dims; ++d) extent = std::max(extent, std::abs(coord(i, d) - mean[d]));
    }
    const real scale = extent > 0 ? extent : real{1};
    for (std::size_t i = 0; i < points; ++i)
        for (std::size_t d = 0; d < dims; ++d)
            coord(i, d) = conf[i] > 0 ? (coord(i, d) - mean[d]) / scale : real{0};
}

}  // namespace detail

/// Whole-sequence normalization; confidence values are left untouched.
inline PoseSequence normalize_pose(PoseSequence seq, const SkeletonLayout& layout) {
    if (seq.length() == 0) throw ShapeError("normalize_pose: empty sequence");
    const std::size_t nv = seq.joints(), nc = seq.channels();
    detail::normalize_points(seq.length() * nv, layout.coord_dims, seq.confidence,
                             [&](std::size_t i, std::size_t d) -> real& { return seq.frames[i * nc + d]; });
    return seq;
}

/// Same rule applied to the frames of one window.
inline Window normalize_window(Window w, const SkeletonLayout& layout) {
    const std::size_t tv = w.length() * w.joints();
    detail::normalize_points(tv, layout.coord_dims, w.confidence,
                             [&](std::size_t i, std::size_t d) -> real& { return w.data[d * tv + i]; });
    return w;
}

/// Windows start at 0, stride, 2*stride, ... for every start inside the
/// sequence; rows past the end repeat the last frame.
inline std::vector<Window> segment_windows(const PoseSequence& seq, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) throw ConfigError("segment_windows: window and stride must be >= 1");
    std::vector<Window> out;
    const std::size_t t = seq.length();
    if (t == 0) return out;
    const std::size_t nv = seq.joints(), nc = seq.channels();
    for (std::size_t start = 0; start < t; start += stride) {
        Window w;
        w.video_id = seq.video_id;
        w.person_id = seq.person_id;
        w.frame_offset = start;
        w.start_frame = seq.start_frame + static_cast<std::int64_t>(start);
        w.valid_frames = std::min(window, t - start);
        w.data = Tensor({nc, window, nv});
        w.confidence = Tensor({window, nv});
        for (std::size_t r = 0; r < window; ++r) {
            const std::size_t src = std::min(start + r, t - 1);
            for (std::size_t v = 0; v < nv; ++v) {
                w.confidence.at(r, v) = seq.confidence.at(src, v);
                for (std::size_t c = 0; c < nc; ++c) w.data.at(c, r, v) = seq.frames.at(src, v, c);
            }
        }
        out.push_back(std::move(w));
    }
    return out;
}

/// Rotation about the origin in the image plane (2D: x,y) or about the
/// vertical axis (3D: x,z with y up).
inline Window rotate_window(Window w, const SkeletonLayout& layout, real angle) {
    if (layout.coord_dims < 2) return w;
    const std::size_t tv = w.length() * w.joints();
    const std::size_t a = 0, b = layout.coord_dims == 3 ? 2 : 1;
    const real c = std::cos(angle), s = std::sin(angle);
    for (std::size_t i = 0; i < tv; ++i) {
        const real x = w.data[a * tv + i], y = w.data[b * tv + i];
        w.data[a * tv + i] = c * x - s * y;
        w.data[b * tv + i] = s * x + c * y;
    }
    return w;
}

/// Horizontal mirror (x -> -x) with left/right joints exchanged.
inline Window flip_window(Window w, const SkeletonLayout& layout) {
    if (!layout.can_flip()) return w;
    const std::size_t t = w.length(), nv = w.joints(), nc = w.channels();
    const auto perm = layout.flip_permutation();
    Window out = w;
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t v = 0; v < nv; ++v) {
            const std::size_t src = perm[v];
            out.confidence.at(r, v) = w.confidence.at(r, src);
            for (std::size_t c = 0; c < nc; ++c) {
                const real val = w.data.at(c, r, src);
                out.data.at(c, r, v) = c == 0 ? -val : val;
            }
        }
    return out;
}

struct AugmentConfig {
    real max_rotation = real(0.3);  // radians, uniform in [-max, max]
    real flip_probability = real(0.5);
};

/// Random rotation and (when the layout has a left/right map) a random flip.
inline Window augment(Window w, const SkeletonLayout& layout, const AugmentConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<real> angle(-cfg.max_rotation, cfg.max_rotation);
    std::uniform_real_distribution<real> coin(0, 1);
    const real a = angle(rng);
    const bool flip = coin(rng) < cfg.flip_probability;
    w = rotate_window(std::move(w), layout, a);
    if (flip) w = flip_window(std::move(w), layout);
    return w;
}

}  // namespace gepc
