#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gepc/core/tensor.hpp"

namespace gepc {

using JointPair = std::pair<std::size_t, std::size_t>;

/// Skeleton description: joints, bone edges and the channel layout of each
/// node. `coord_dims` channels hold coordinates (2 or 3, or 0 for opaque
/// per-node features); for 2D layouts the channel after them is confidence.
struct SkeletonLayout {
    std::string name;
    std::size_t joints = 0;
    std::vector<JointPair> edges;
    std::size_t channels = 3;
    std::size_t coord_dims = 2;
    std::vector<JointPair> flip_pairs;

    bool has_confidence_channel() const noexcept { return coord_dims == 2 && channels >= 3; }
    bool can_flip() const noexcept { return coord_dims >= 2 && !flip_pairs.empty(); }

    void validate() const {
        if (joints < 2) throw SchemaError("layout '" + name + "': at least 2 joints required");
        if (channels == 0) throw SchemaError("layout '" + name + "': channels must be positive");
        if (coord_dims > channels) throw SchemaError("layout '" + name + "': more coordinate dims than channels");
        auto check = [&](const std::vector<JointPair>& pairs, const char* what) {
            for (const auto& [a, b] : pairs)
                if (a >= joints || b >= joints)
                    throw SchemaError("layout '" + name + "': " + what + " (" + std::to_string(a) + "," +
                                      std::to_string(b) + ") out of range for V=" + std::to_string(joints));
        };
        check(edges, "edge");
        check(flip_pairs, "flip pair");
    }

    /// Joint permutation applied by a horizontal flip (identity when no pairs).
    std::vector<std::size_t> flip_permutation() const {
        std::vector<std::size_t> perm(joints);
        for (std::size_t i = 0; i < joints; ++i) perm[i] = i;
        for (const auto& [a, b] : flip_pairs) std::swap(perm[a], perm[b]);
        return perm;
    }
};

/// Symmetric 0/1 bone matrix [V,V]; self-loops are added later by
/// normalize_adjacency.
inline Tensor build_static_adjacency(const SkeletonLayout& layout) {
    layout.validate();
    Tensor a({layout.joints, layout.joints});
    for (const auto& [i, j] : layout.edges) {
        if (i == j) continue;
        a.at(i, j) = 1;
        a.at(j, i) = 1;
    }
    return a;
}

namespace layouts {

/// COCO-17 keypoints as emitted by Alphapose.
inline SkeletonLayout coco17() {
    return {"coco17",
            17,
            {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {0, 5}, {0, 6}, {5, 6}, {5, 7}, {7, 9}, {6, 8}, {8, 10},
             {5, 11}, {6, 12}, {11, 12}, {11, 13}, {13, 15}, {12, 14}, {14, 16}},
            3,
            2,
            {{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}, {13, 14}, {15, 16}}};
}

/// Kinect v2 25-joint skeleton (NTU-RGB+D), 0-based.
inline SkeletonLayout ntu25() {
    return {"ntu25",
            25,
            {{0, 1}, {1, 20}, {2, 20}, {3, 2}, {4, 20}, {5, 4}, {6, 5}, {7, 6}, {8, 20}, {9, 8}, {10, 9},
             {11, 10}, {12, 0}, {13, 12}, {14, 13}, {15, 14}, {16, 0}, {17, 16}, {18, 17}, {19, 18},
             {21, 22}, {22, 7}, {23, 24}, {24, 11}},
            3,
            3,
            {{4, 8}, {5, 9}, {6, 10}, {7, 11}, {21, 23}, {22, 24}, {12, 16}, {13, 17}, {14, 18}, {15, 19}}};
}

/// Seven-joint stick figure used by the synthetic corpora:
/// head, neck, left hand, right hand, pelvis, left foot, right foot.
inline SkeletonLayout stick7() {
    return {"stick7", 7, {{0, 1}, {1, 2}, {1, 3}, {1, 4}, {4, 5}, {4, 6}}, 3, 2, {{2, 3}, {5, 6}}};
}

inline bool is_builtin(const std::string& name) {
    return name == "coco17" || name == "ntu25" || name == "stick7";
}

inline SkeletonLayout builtin(const std::string& name) {
    if (name == "coco17") return coco17();
    if (name == "ntu25") return ntu25();
    if (name == "stick7") return stick7();
    throw SchemaError("unknown built-in layout '" + name + "'");
}

}  // namespace layouts
}  // namespace gepc
