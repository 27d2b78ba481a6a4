#pragma once

// JSON encodings of skeletons and statistics, shared by the dataset sidecar
// and the checkpoint header.

#include <json.hpp>

#include "motiondiff/dataset.hpp"
#include "motiondiff/error.hpp"
#include "motiondiff/motion.hpp"

namespace motiondiff::jsonio {

using nlohmann::json;

inline json vec_to_json(const RowVector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline RowVector vec_from_json(const json& a, const char* what) {
    if (!a.is_array()) throw DataError(std::string(what) + " must be an array");
    RowVector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

inline json skeleton_to_json(const SkeletonDef& s) {
    json j;
    j["joint_names"] = s.joint_names;
    j["parent_index"] = s.parent_index;
    json offsets = json::array();
    json ends = json::array();
    for (std::size_t i = 0; i < s.offsets.size(); ++i) {
        offsets.push_back({s.offsets[i].x(), s.offsets[i].y(), s.offsets[i].z()});
        if (i < s.end_sites.size() && s.end_sites[i]) {
            const Vec3& e = *s.end_sites[i];
            ends.push_back({e.x(), e.y(), e.z()});
        } else {
            ends.push_back(nullptr);
        }
    }
    j["offsets"] = offsets;
    j["end_sites"] = ends;
    j["foot_joint_indices"] = s.foot_joint_indices;
    return j;
}

inline SkeletonDef skeleton_from_json(const json& j) {
    SkeletonDef s;
    try {
        s.joint_names = j.at("joint_names").get<std::vector<std::string>>();
        s.parent_index = j.at("parent_index").get<std::vector<int>>();
        for (const auto& o : j.at("offsets")) s.offsets.emplace_back(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
        for (const auto& e : j.at("end_sites")) {
            if (e.is_null()) {
                s.end_sites.emplace_back();
            } else {
                s.end_sites.emplace_back(Vec3(e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()));
            }
        }
        s.foot_joint_indices = j.at("foot_joint_indices").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid skeleton record: ") + e.what());
    }
    s.validate();
    return s;
}

inline json stats_to_json(const DatasetStats& st) {
    return {{"rot_mean", vec_to_json(st.rot_mean)},
            {"rot_std", vec_to_json(st.rot_std)},
            {"root_mean", vec_to_json(st.root_mean)},
            {"root_std", vec_to_json(st.root_std)}};
}

inline DatasetStats stats_from_json(const json& j) {
    if (!j.is_object()) throw DataError("dataset statistics record is missing");
    DatasetStats st;
    try {
        st.rot_mean = vec_from_json(j.at("rot_mean"), "rot_mean");
        st.rot_std = vec_from_json(j.at("rot_std"), "rot_std");
        st.root_mean = vec_from_json(j.at("root_mean"), "root_mean");
        st.root_std = vec_from_json(j.at("root_std"), "root_std");
    } catch (const json::exception& e) {
        throw DataError(std::string("invalid statistics record: ") + e.what());
    }
    if (st.rot_mean.size() != st.rot_std.size() || st.root_mean.size() != st.root_std.size()) {
        throw DataError("statistics mean/std lengths differ");
    }
    if ((st.rot_std.array() < kStdFloor).any() || (st.root_std.array() < kStdFloor).any()) {
        throw DataError("statistics std below floor");
    }
    return st;
}

}  // namespace motiondiff::jsonio
