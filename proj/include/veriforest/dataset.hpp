#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "veriforest/png_io.hpp"
#include "veriforest/raster.hpp"
#include "veriforest/rng.hpp"
#include "veriforest/scenesim.hpp"

namespace veriforest {

using ordered_json = nlohmann::ordered_json;

struct Submission {
    std::string id;
    Raster image;
    int claimedI = 0, claimedJ = 0, claimedT = 0;
    std::string label = "truthful"; // truthful|wrong_location|wrong_time|adversarial|combined
    double cover = 0.0;             // forest cover of the image content (source cell)
    uint64_t jitterSeed = 0;

    struct Provenance {
        int srcI = 0, srcJ = 0, srcT = 0;
        std::vector<std::string> stages;
    };
    Provenance prov;
};

using CellKey = std::tuple<int, int, int>; // (i, j, t)

struct Dataset {
    WorldConfig world;
    uint64_t captureSeed = 0;
    ordered_json attackParams; // null when no attacks were generated
    std::vector<Submission> submissions; // kept sorted by id
    std::map<CellKey, Raster> satellites;
    std::map<CellKey, double> covers; // ground-truth cover per cell

    const Raster& satellite(int i, int j, int t) const {
        auto it = satellites.find({i, j, t});
        if (it == satellites.end())
            throw std::runtime_error("dataset: missing satellite tile for parcel (" +
                                     std::to_string(i) + "," + std::to_string(j) + ") t=" +
                                     std::to_string(t));
        return it->second;
    }
    double cover_of(int i, int j, int t) const {
        auto it = covers.find({i, j, t});
        if (it == covers.end()) throw std::runtime_error("dataset: missing cover record");
        return it->second;
    }
};

namespace detail {
inline std::string pad2(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d", v);
    return buf;
}
} // namespace detail

inline std::string cell_name(int i, int j, int t) {
    return "p" + detail::pad2(i) + "-" + detail::pad2(j) + "_t" + std::to_string(t);
}

inline std::string submission_id(int i, int j, int t, const std::string& label) {
    return cell_name(i, j, t) + "_" + label;
}

// One truthful submission per (parcel, t), each with a fresh capture jitter
// seed, plus the satellite tile store.
inline Dataset build_dataset(const World& world, uint64_t captureSeed) {
    Dataset ds;
    ds.world = world.config;
    ds.captureSeed = captureSeed;
    const int G = world.config.gridSize, T = world.config.timesteps;
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j)
            for (int t = 0; t < T; ++t) {
                uint64_t js = derive_seed(captureSeed, i, j, t, kCaptureSeed);
                Submission s;
                s.id = submission_id(i, j, t, "truthful");
                s.image = render_drone(world, i, j, t, js);
                s.claimedI = i;
                s.claimedJ = j;
                s.claimedT = t;
                s.label = "truthful";
                s.cover = forest_cover(world, i, j, t);
                s.jitterSeed = js;
                s.prov = {i, j, t, {"truthful"}};
                ds.submissions.push_back(std::move(s));
                ds.satellites[{i, j, t}] = render_satellite(world, i, j, t);
                ds.covers[{i, j, t}] = forest_cover(world, i, j, t);
            }
    std::sort(ds.submissions.begin(), ds.submissions.end(),
              [](const Submission& a, const Submission& b) { return a.id < b.id; });
    return ds;
}

inline ordered_json world_config_json(const WorldConfig& c) {
    return ordered_json{{"gridSize", c.gridSize},
                        {"parcelPixels", c.parcelPixels},
                        {"resolutionRatio", c.resolutionRatio},
                        {"timesteps", c.timesteps},
                        {"coverMin", c.coverMin},
                        {"coverMax", c.coverMax},
                        {"loggingProb", c.loggingProb},
                        {"loggingFracMin", c.loggingFracMin},
                        {"loggingFracMax", c.loggingFracMax},
                        {"seed", c.seed},
                        {"droneNoise", c.droneNoise},
                        {"satNoise", c.satNoise},
                        {"satIntensity", c.satIntensity},
                        {"jitterMin", c.jitterMin},
                        {"jitterMax", c.jitterMax},
                        {"parcelTint", c.parcelTint}};
}

inline WorldConfig world_config_from_json(const nlohmann::json& j) {
    WorldConfig c;
    c.gridSize = j.at("gridSize");
    c.parcelPixels = j.at("parcelPixels");
    c.resolutionRatio = j.at("resolutionRatio");
    c.timesteps = j.at("timesteps");
    c.coverMin = j.at("coverMin");
    c.coverMax = j.at("coverMax");
    c.loggingProb = j.at("loggingProb");
    c.loggingFracMin = j.at("loggingFracMin");
    c.loggingFracMax = j.at("loggingFracMax");
    c.seed = j.at("seed");
    c.droneNoise = j.at("droneNoise");
    c.satNoise = j.at("satNoise");
    c.satIntensity = j.at("satIntensity");
    c.jitterMin = j.at("jitterMin");
    c.jitterMax = j.at("jitterMax");
    c.parcelTint = j.at("parcelTint");
    return c;
}

inline ordered_json manifest_json(const Dataset& ds) {
    ordered_json m;
    m["format"] = "veriforest-dataset-v1";
    m["world"] = world_config_json(ds.world);
    m["captureSeed"] = ds.captureSeed;
    m["attackParams"] = ds.attackParams;
    ordered_json subs = ordered_json::array();
    for (const auto& s : ds.submissions) {
        ordered_json rec{{"id", s.id},
                         {"parcel", {s.claimedI, s.claimedJ}},
                         {"time", s.claimedT},
                         {"label", s.label},
                         {"cover", s.cover},
                         {"file", "images/" + s.id + ".png"},
                         {"jitterSeed", s.jitterSeed},
                         {"provenance",
                          {{"parcel", {s.prov.srcI, s.prov.srcJ}},
                           {"time", s.prov.srcT},
                           {"stages", s.prov.stages}}}};
        subs.push_back(std::move(rec));
    }
    m["submissions"] = std::move(subs);
    ordered_json sats = ordered_json::array();
    for (const auto& [key, img] : ds.satellites) {
        auto [i, j, t] = key;
        sats.push_back(ordered_json{{"parcel", {i, j}},
                                    {"time", t},
                                    {"cover", ds.cover_of(i, j, t)},
                                    {"file", "satellite/" + cell_name(i, j, t) + ".png"}});
    }
    m["satellites"] = std::move(sats);
    return m;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "satellite");
    for (const auto& s : ds.submissions)
        write_png((dir / "images" / (s.id + ".png")).string(), s.image);
    for (const auto& [key, img] : ds.satellites) {
        auto [i, j, t] = key;
        write_png((dir / "satellite" / (cell_name(i, j, t) + ".png")).string(), img);
    }
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest");
    out << manifest_json(ds).dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: no manifest.json in " + dir.string());
    nlohmann::json m = nlohmann::json::parse(in);
    if (m.at("format") != "veriforest-dataset-v1")
        throw std::runtime_error("load_dataset: unknown manifest format");

    Dataset ds;
    ds.world = world_config_from_json(m.at("world"));
    ds.captureSeed = m.at("captureSeed");
    ds.attackParams = m.at("attackParams");
    for (const auto& rec : m.at("submissions")) {
        Submission s;
        s.id = rec.at("id");
        s.claimedI = rec.at("parcel")[0];
        s.claimedJ = rec.at("parcel")[1];
        s.claimedT = rec.at("time");
        s.label = rec.at("label");
        s.cover = rec.at("cover");
        s.jitterSeed = rec.at("jitterSeed");
        s.prov.srcI = rec.at("provenance").at("parcel")[0];
        s.prov.srcJ = rec.at("provenance").at("parcel")[1];
        s.prov.srcT = rec.at("provenance").at("time");
        s.prov.stages = rec.at("provenance").at("stages").get<std::vector<std::string>>();
        s.image = read_png((dir / std::string(rec.at("file"))).string());
        ds.submissions.push_back(std::move(s));
    }
    for (const auto& rec : m.at("satellites")) {
        int i = rec.at("parcel")[0], j = rec.at("parcel")[1], t = rec.at("time");
        ds.satellites[{i, j, t}] = read_png((dir / std::string(rec.at("file"))).string());
        ds.covers[{i, j, t}] = rec.at("cover");
    }
    return ds;
}

inline std::string manifest_string(const Dataset& ds) { return manifest_json(ds).dump(2) + "\n"; }

} // namespace veriforest
