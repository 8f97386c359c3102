#pragma once

// Pose wire format: JSON lines, one record per person-frame, preceded by a
// layout header line.
//
//   {"layout": {"name": "coco17", "V": 17, "edges": [[0,1],...], "channels": 3}}
//   {"video_id": "01_001", "person_id": "3", "frame": 12, "keypoints": [[x, y, conf], ...]}
//
// Optional header keys: "dims" (coordinate dims, default 2) and "flip_pairs".
// 3D layouts carry [x, y, z] keypoints plus an optional "conf" array.

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "gepc/pose/sequence.hpp"

namespace gepc {

using json = nlohmann::json;

struct LoadOptions {
    std::size_t max_gap = 2;                // missing frames bridged by interpolation
    std::optional<SkeletonLayout> layout;   // used when the file has no header
};

struct PoseFile {
    SkeletonLayout layout;
    std::vector<PoseSequence> sequences;
};

namespace detail {

inline std::vector<JointPair> pairs_from_json(const json& j, const char* key) {
    std::vector<JointPair> out;
    if (!j.contains(key)) return out;
    for (const auto& e : j.at(key)) {
        if (!e.is_array() || e.size() != 2) throw SchemaError(std::string("layout: malformed ") + key + " entry");
        out.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
    }
    return out;
}

inline json pairs_to_json(const std::vector<JointPair>& pairs) {
    json a = json::array();
    for (const auto& [x, y] : pairs) a.push_back({x, y});
    return a;
}

struct RawFrame {
    std::vector<real> values;  // V * C
    std::vector<real> conf;    // V
};

}  // namespace detail

inline SkeletonLayout layout_from_json(const json& j) {
    SkeletonLayout l;
    l.name = j.value("name", std::string("custom"));
    const bool builtin = layouts::is_builtin(l.name);
    if (builtin) l = layouts::builtin(l.name);
    if (j.contains("V")) l.joints = j.at("V").get<std::size_t>();
    if (j.contains("edges")) l.edges = detail::pairs_from_json(j, "edges");
    if (j.contains("channels")) l.channels = j.at("channels").get<std::size_t>();
    if (j.contains("dims")) l.coord_dims = j.at("dims").get<std::size_t>();
    if (j.contains("flip_pairs")) l.flip_pairs = detail::pairs_from_json(j, "flip_pairs");
    if (!builtin && !j.contains("V")) throw SchemaError("layout: missing V");
    l.validate();
    return l;
}

inline json layout_to_json(const SkeletonLayout& l) {
    json j;
    j["name"] = l.name;
    j["V"] = l.joints;
    j["edges"] = detail::pairs_to_json(l.edges);
    j["channels"] = l.channels;
    j["dims"] = l.coord_dims;
    j["flip_pairs"] = detail::pairs_to_json(l.flip_pairs);
    return j;
}

/// Reads and groups pose records into per-person sequences sorted by frame.
/// Gaps of at most `max_gap` missing frames are linearly interpolated;
/// longer gaps split the track.
inline PoseFile read_pose_jsonl(std::istream& in, const LoadOptions& opt = {}) {
    PoseFile out;
    bool have_layout = false;
    if (opt.layout) {
        out.layout = *opt.layout;
        out.layout.validate();
        have_layout = true;
    }
    using Key = std::pair<std::string, std::string>;
    std::map<Key, std::map<std::int64_t, detail::RawFrame>> tracks;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        if (!rec.is_object()) throw ParseError("record is not an object", lineno);
        if (rec.contains("layout")) {
            if (!tracks.empty()) throw ParseError("layout header after records", lineno);
            try {
                out.layout = layout_from_json(rec.at("layout"));
            } catch (const json::exception& e) {
                throw ParseError(std::string("malformed layout header: ") + e.what(), lineno);
            }
            have_layout = true;
            continue;
        }
        if (!have_layout) throw ParseError("record before layout header", lineno);
        const SkeletonLayout& L = out.layout;
        detail::RawFrame raw;
        Key key;
        std::int64_t frame = 0;
        try {
            key = {rec.at("video_id").get<std::string>(), rec.at("person_id").get<std::string>()};
            frame = rec.at("frame").get<std::int64_t>();
            const json& kp = rec.at("keypoints");
            if (!kp.is_array()) throw ParseError("keypoints is not an array", lineno);
            if (kp.size() != L.joints)
                throw SchemaError("line " + std::to_string(lineno) + ": " + std::to_string(kp.size()) +
                                  " keypoints, layout declares V=" + std::to_string(L.joints));
            raw.values.reserve(L.joints * L.channels);
            for (const auto& joint : kp) {
                if (!joint.is_array() || joint.size() != L.channels)
                    throw SchemaError("line " + std::to_string(lineno) + ": keypoint with " +
                                      std::to_string(joint.is_array() ? joint.size() : 0) +
                                      " channels, layout declares " + std::to_string(L.channels));
                for (const auto& v : joint) raw.values.push_back(v.get<real>());
            }
            raw.conf.assign(L.joints, real{1});
            if (L.has_confidence_channel()) {
                for (std::size_t v = 0; v < L.joints; ++v) raw.conf[v] = raw.values[v * L.channels + 2];
            } else if (rec.contains("conf")) {
                const json& c = rec.at("conf");
                if (c.size() != L.joints) throw SchemaError("line " + std::to_string(lineno) + ": conf length mismatch");
                for (std::size_t v = 0; v < L.joints; ++v) raw.conf[v] = c[v].get<real>();
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), lineno);
        }
        for (real c : raw.conf)
            if (c < 0 || c > 1) throw SchemaError("line " + std::to_string(lineno) + ": confidence outside [0,1]");
        auto& track = tracks[key];
        if (!track.emplace(frame, std::move(raw)).second)
            throw ParseError("duplicate frame " + std::to_string(frame) + " for " + key.first + "/" + key.second,
                             lineno);
    }
    if (!have_layout) throw ParseError("missing layout header", 0);

    const std::size_t nv = out.layout.joints, nc = out.layout.channels;
    for (auto& [key, track] : tracks) {
        std::vector<std::pair<std::int64_t, const detail::RawFrame*>> run;
        auto flush = [&] {
            if (run.empty()) return;
            const std::int64_t first = run.front().first;
            const std::size_t t = static_cast<std::size_t>(run.back().first - first + 1);
            PoseSequence seq{key.first, key.second, first, Tensor({t, nv, nc}), Tensor({t, nv})};
            for (std::size_t r = 0; r < run.size(); ++r) {
                const auto& [f, raw] = run[r];
                const std::size_t row = static_cast<std::size_t>(f - first);
                std::copy(raw->values.begin(), raw->values.end(), seq.frames.data() + row * nv * nc);
                std::copy(raw->conf.begin(), raw->conf.end(), seq.confidence.data() + row * nv);
                if (r + 1 == run.size()) break;
                const auto& [f2, raw2] = run[r + 1];
                const std::int64_t gap = f2 - f;
                for (std::int64_t m = 1; m < gap; ++m) {
                    const real a = static_cast<real>(m) / static_cast<real>(gap);
                    const std::size_t mrow = row + static_cast<std::size_t>(m);
                    for (std::size_t i = 0; i < nv * nc; ++i)
                        seq.frames[mrow * nv * nc + i] = (1 - a) * raw->values[i] + a * raw2->values[i];
                    for (std::size_t i = 0; i < nv; ++i)
                        seq.confidence[mrow * nv + i] = (1 - a) * raw->conf[i] + a * raw2->conf[i];
                }
            }
            out.sequences.push_back(std::move(seq));
            run.clear();
        };
        for (const auto& [frame, raw] : track) {
            if (!run.empty() && frame - run.back().first - 1 > static_cast<std::int64_t>(opt.max_gap)) flush();
            run.emplace_back(frame, &raw);
        }
        flush();
    }
    return out;
}

inline PoseFile load_pose_jsonl(const std::string& path, const LoadOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open pose file '" + path + "'");
    return read_pose_jsonl(in, opt);
}

/// Writes the header line and one record per person-frame, in sequence order.
inline void write_pose_jsonl(std::ostream& out, const SkeletonLayout& layout,
                             const std::vector<PoseSequence>& sequences) {
    out << json{{"layout", layout_to_json(layout)}}.dump() << '\n';
    const std::size_t nv = layout.joints, nc = layout.channels;
    for (const auto& s : sequences) {
        if (s.joints() != nv || s.channels() != nc)
            throw SchemaError("write_pose_jsonl: sequence does not match layout '" + layout.name + "'");
        for (std::size_t t = 0; t < s.length(); ++t) {
            json rec;
            rec["video_id"] = s.video_id;
            rec["person_id"] = s.person_id;
            rec["frame"] = s.start_frame + static_cast<std::int64_t>(t);
            json kp = json::array();
            for (std::size_t v = 0; v < nv; ++v) {
                json joint = json::array();
                for (std::size_t c = 0; c < nc; ++c) joint.push_back(s.frames.at(t, v, c));
                kp.push_back(std::move(joint));
            }
            rec["keypoints"] = std::move(kp);
            if (!layout.has_confidence_channel()) {
                json conf = json::array();
                for (std::size_t v = 0; v < nv; ++v) conf.push_back(s.confidence.at(t, v));
                rec["conf"] = std::move(conf);
            }
            out << rec.dump() << '\n';
        }
    }
}

inline void write_pose_jsonl(const std::string& path, const SkeletonLayout& layout,
                             const std::vector<PoseSequence>& sequences) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write pose file '" + path + "'");
    write_pose_jsonl(out, layout, sequences);
}

inline json ground_truth_to_json(const GroundTruth& gt) {
    return json{{"frame_labels", gt.frame_labels}, {"clip_labels", gt.clip_labels}};
}

inline GroundTruth ground_truth_from_json(const json& j) {
    GroundTruth gt;
    try {
        if (j.contains("frame_labels")) gt.frame_labels = j.at("frame_labels").get<std::map<std::string, std::vector<int>>>();
        if (j.contains("clip_labels")) gt.clip_labels = j.at("clip_labels").get<std::map<std::string, int>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed ground-truth file: ") + e.what());
    }
    return gt;
}

inline GroundTruth load_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open ground-truth file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid ground-truth JSON: ") + e.what(), 0);
    }
    return ground_truth_from_json(j);
}

}  // namespace gepc
