#ifndef PRANK_DATASET_HPP
#define PRANK_DATASET_HPP

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prank/core_types.hpp"
#include "prank/errors.hpp"

namespace prank {

inline constexpr int kDatasetVersion = 1;

struct Dataset {
    DatasetHeader header;
    std::vector<Example> examples;
};

namespace detail {

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < t.size(); ++i) {
        const Point p = t.point(i);
        pts.push_back({p.x, p.y});
    }
    return pts;
}

inline Trajectory trajectory_from_json(const nlohmann::json& j, std::size_t m, std::size_t line) {
    if (!j.is_array()) throw ParseError("trajectory must be an array of [x, y] pairs", line);
    if (j.size() != m)
        throw ParseError("trajectory has " + std::to_string(j.size()) + " points, header says " +
                             std::to_string(m),
                         line);
    std::vector<double> flat;
    flat.reserve(2 * m);
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw ParseError("trajectory point must be [x, y]", line);
        flat.push_back(p[0].get<double>());
        flat.push_back(p[1].get<double>());
    }
    try {
        return Trajectory(std::move(flat));
    } catch (const Error& e) {
        throw ParseError(e.what(), line);
    }
}

inline nlohmann::json parse_line(const std::string& text, std::size_t line) {
    try {
        auto j = nlohmann::json::parse(text);
        if (!j.is_object()) throw ParseError("record is not an object", line);
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
}

template <class T>
T required(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'", line);
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(std::string("field '") + key + "' has the wrong type", line);
    }
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgumentError("cannot write " + path);
    return out;
}

}  // namespace detail

inline nlohmann::json header_to_json(const DatasetHeader& h) {
    return {{"M", h.M}, {"dt", h.dt}, {"H", h.H}, {"F", h.F}, {"version", h.version}};
}

inline DatasetHeader header_from_json(const nlohmann::json& j, std::size_t line) {
    DatasetHeader h;
    h.M = detail::required<std::size_t>(j, "M", line);
    h.dt = detail::required<double>(j, "dt", line);
    h.H = detail::required<std::size_t>(j, "H", line);
    h.F = detail::required<std::size_t>(j, "F", line);
    h.version = detail::required<int>(j, "version", line);
    if (h.M < 2) throw ParseError("header M must be at least 2", line);
    if (!(h.dt > 0.0)) throw ParseError("header dt must be positive", line);
    if (h.version != kDatasetVersion)
        throw ParseError("unsupported dataset version " + std::to_string(h.version), line);
    return h;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    auto out = detail::open_output(path);
    out << header_to_json(ds.header).dump() << '\n';
    for (const auto& ex : ds.examples) {
        if (ex.ground_truth.size() != ds.header.M || ex.scene.size() != ds.header.F)
            throw LengthError("example " + ex.id + " does not match the dataset header");
        nlohmann::json rec;
        rec["id"] = ex.id;
        rec["scene"] = std::vector<double>(ex.scene.values().begin(), ex.scene.values().end());
        rec["gt"] = detail::trajectory_to_json(ex.ground_truth);
        out << rec.dump() << '\n';
    }
    if (!out) throw ArgumentError("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    auto in = detail::open_input(path);
    Dataset ds;
    std::string text;
    std::size_t line = 0;
    bool have_header = false;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        auto j = detail::parse_line(text, line);
        if (!have_header) {
            ds.header = header_from_json(j, line);
            have_header = true;
            continue;
        }
        Example ex;
        ex.id = detail::required<std::string>(j, "id", line);
        auto scene = detail::required<std::vector<double>>(j, "scene", line);
        if (scene.size() != ds.header.F)
            throw ParseError("scene has " + std::to_string(scene.size()) + " values, header says " +
                                 std::to_string(ds.header.F),
                             line);
        try {
            ex.scene = SceneFeatures(std::move(scene));
        } catch (const Error& e) {
            throw ParseError(e.what(), line);
        }
        if (!j.contains("gt")) throw ParseError("missing field 'gt'", line);
        ex.ground_truth = detail::trajectory_from_json(j["gt"], ds.header.M, line);
        ds.examples.push_back(std::move(ex));
    }
    if (!have_header) throw ParseError("missing header record", 1);
    return ds;
}

}  // namespace prank

#endif  // PRANK_DATASET_HPP
