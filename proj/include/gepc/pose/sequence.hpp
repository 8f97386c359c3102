#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gepc/core/tensor.hpp"
#include "gepc/pose/layout.hpp"

namespace gepc {

/// One person's keypoint trajectory in one video.
struct PoseSequence {
    std::string video_id;
    std::string person_id;
    std::int64_t start_frame = 0;
    Tensor frames;      // [T, V, C]
    Tensor confidence;  // [T, V], 1 where the layout carries no confidence

    std::size_t length() const { return frames.rank() ? frames.dim(0) : 0; }
    std::size_t joints() const { return frames.dim(1); }
    std::size_t channels() const { return frames.dim(2); }
};

/// Fixed-length segment of a PoseSequence, channel-first.
struct Window {
    std::string video_id;
    std::string person_id;
    std::int64_t start_frame = 0;    // absolute frame of the first row
    std::size_t frame_offset = 0;    // offset inside the source sequence
    std::size_t valid_frames = 0;    // rows before right-padding
    Tensor data;                     // [C, T_w, V]
    Tensor confidence;               // [T_w, V]

    std::size_t channels() const { return data.dim(0); }
    std::size_t length() const { return data.dim(1); }
    std::size_t joints() const { return data.dim(2); }
};

/// Evaluation-only labels: 1 = abnormal.
struct GroundTruth {
    std::map<std::string, std::vector<int>> frame_labels;  // video -> per-frame flag
    std::map<std::string, int> clip_labels;                 // video -> clip flag
};

/// Windows plus labels. Training entry points accept only the windows.
struct LabeledSet {
    std::vector<Window> windows;
    GroundTruth labels;
};

/// Stacks windows [C,T,V] into a batch [N,C,T,V].
inline Tensor stack_windows(const std::vector<const Window*>& ws) {
    if (ws.empty()) throw ShapeError("stack_windows: empty batch");
    const Shape& s = ws[0]->data.shape();
    const std::size_t per = ws[0]->data.size();
    Tensor out({ws.size(), s[0], s[1], s[2]});
    for (std::size_t i = 0; i < ws.size(); ++i) {
        if (ws[i]->data.shape() != s)
            throw ShapeError("stack_windows: window " + shape_str(ws[i]->data.shape()) + " vs " + shape_str(s));
        std::copy_n(ws[i]->data.data(), per, out.data() + i * per);
    }
    return out;
}

}  // namespace gepc
