#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "gepc/core/error.hpp"
#include "gepc/core/tensor.hpp"

namespace gepc {

/// Normality score of one window with the frames it covers.
struct WindowScore {
    std::string video_id;
    std::string person_id;
    std::int64_t start_frame = 0;
    std::size_t frames = 0;
    real score = 0;
};

using FrameScores = std::map<std::string, std::vector<real>>;

inline real median(std::vector<real> v) {
    if (v.empty()) throw Error("median of an empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const real hi = v[mid];
    if (v.size() % 2) return hi;
    return (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)) + hi) / 2;
}

/// Per-frame normality per video. Overlapping windows of one person are
/// averaged, the least normal person sets the frame, and frames without any
/// person take the video's median (or the global median for videos with no
/// scored frame). `frame_counts` fixes the series length per video; videos
/// absent from it span up to their last covered frame.
inline FrameScores aggregate_frame_scores(const std::vector<WindowScore>& windows,
                                          const std::map<std::string, std::size_t>& frame_counts = {}) {
    struct Acc {
        real sum = 0;
        std::size_t count = 0;
    };
    // video -> person -> frame -> accumulator
    std::map<std::string, std::map<std::string, std::map<std::int64_t, Acc>>> acc;
    for (const auto& w : windows)
        for (std::size_t t = 0; t < w.frames; ++t) {
            auto& a = acc[w.video_id][w.person_id][w.start_frame + static_cast<std::int64_t>(t)];
            a.sum += w.score;
            ++a.count;
        }

    std::map<std::string, std::size_t> lengths = frame_counts;
    for (const auto& [vid, persons] : acc) {
        if (frame_counts.count(vid)) continue;
        std::int64_t last = -1;
        for (const auto& [pid, frames] : persons)
            if (!frames.empty()) last = std::max(last, frames.rbegin()->first);
        lengths[vid] = static_cast<std::size_t>(last + 1);
    }

    FrameScores out;
    std::map<std::string, std::vector<bool>> covered;
    std::vector<real> all_scored;
    for (const auto& [vid, n] : lengths) {
        std::vector<real> series(n, std::numeric_limits<real>::infinity());
        std::vector<bool> has(n, false);
        if (auto it = acc.find(vid); it != acc.end())
            for (const auto& [pid, frames] : it->second)
                for (const auto& [f, a] : frames) {
                    if (f < 0 || static_cast<std::size_t>(f) >= n) continue;
                    const std::size_t i = static_cast<std::size_t>(f);
                    series[i] = std::min(series[i], a.sum / static_cast<real>(a.count));
                    has[i] = true;
                }
        for (std::size_t i = 0; i < n; ++i)
            if (has[i]) all_scored.push_back(series[i]);
        out[vid] = std::move(series);
        covered[vid] = std::move(has);
    }
    const bool any = !all_scored.empty();
    const real global = any ? median(all_scored) : real{0};
    for (auto& [vid, series] : out) {
        std::vector<real> scored;
        const auto& has = covered[vid];
        for (std::size_t i = 0; i < series.size(); ++i)
            if (has[i]) scored.push_back(series[i]);
        const real fill = scored.empty() ? global : median(scored);
        for (std::size_t i = 0; i < series.size(); ++i)
            if (!has[i]) series[i] = fill;
    }
    return out;
}

/// CSV `video_id,frame,score` in anomaly polarity (negated normality).
inline void write_scores_csv(std::ostream& out, const FrameScores& normality) {
    out << "video_id,frame,score\n" << std::setprecision(std::numeric_limits<real>::max_digits10);
    for (const auto& [vid, series] : normality)
        for (std::size_t f = 0; f < series.size(); ++f) out << vid << ',' << f << ',' << -series[f] + real{0} << '\n';
}

inline void write_scores_csv(const std::string& path, const FrameScores& normality) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_scores_csv(out, normality);
}

}  // namespace gepc
