#pragma once

// Synthetic contour dataset: random closed curves, an input sampling P0 and
// independent reference samplings T_l with 2^l |P0| points.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppu/curve.hpp"
#include "ppu/error.hpp"
#include "ppu/point_io.hpp"
#include "ppu/point_set.hpp"

namespace ppu {

struct TrainingExample {
  PointSet input;                   // P0
  std::vector<PointSet> references; // references[l - 1] = T_l
  std::optional<CurveSpec> curve;
  bool noise_free = true;

  std::size_t levels() const { return references.size(); }

  const PointSet& reference(std::size_t level) const {
    if (level < 1 || level > references.size()) {
      throw ValidationError("example has no reference for level " +
                            std::to_string(level));
    }
    return references[level - 1];
  }
};

inline TrainingExample build_example(const ParametricCurve& curve, std::size_t n0,
                                     std::size_t levels,
                                     std::size_t min_points = 32) {
  if (n0 < min_points || n0 < 3) {
    throw ValidationError("example input size " + std::to_string(n0) +
                          " is below the network minimum of " +
                          std::to_string(min_points));
  }
  if (levels < 1) throw ValidationError("example needs at least one level");
  TrainingExample ex;
  ex.input = sample_curve_uniform(curve, n0);
  for (std::size_t l = 1; l <= levels; ++l) {
    ex.references.push_back(sample_curve_uniform(curve, (std::size_t{1} << l) * n0));
  }
  ex.curve = curve.spec();
  return ex;
}

inline nlohmann::json curve_to_json(const CurveSpec& spec) {
  return {{"kind", to_string(spec.kind)},
          {"params", spec.params},
          {"seed", spec.seed},
          {"rejected_seeds", spec.rejected_seeds}};
}

inline CurveSpec curve_from_json(const nlohmann::json& j) {
  try {
    CurveSpec spec;
    spec.kind = parse_curve_kind(j.at("kind").get<std::string>());
    spec.params = j.at("params").get<std::vector<double>>();
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.rejected_seeds =
        j.value("rejected_seeds", std::vector<std::uint64_t>{});
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad curve spec: ") + e.what());
  }
}

inline CurveSpec read_curve_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return curve_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

struct DatasetOptions {
  std::size_t curves = 80;
  std::size_t n0 = 50;
  std::size_t levels = 4;
  std::uint64_t seed = 0;
  std::size_t min_points = 32;
  // Every fifth curve (by index) goes to the test split.
  std::size_t test_every = 5;
};

struct DatasetEntry {
  std::string id;
  std::string split;
  CurveSpec curve;
  std::filesystem::path dir;  // relative to the manifest
};

struct DatasetManifest {
  std::size_t n0 = 0;
  std::size_t levels = 0;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;
};

inline CurveKind dataset_curve_kind(std::size_t index) {
  static constexpr CurveKind kinds[] = {CurveKind::Circle, CurveKind::Ellipse,
                                        CurveKind::RoundedPolygon,
                                        CurveKind::Fourier};
  return kinds[index % 4];
}

inline std::string level_file(std::size_t level) {
  return level == 0 ? "P0.xyz" : "T" + std::to_string(level) + ".xyz";
}

// Writes <out>/manifest.json and one directory per curve with P0.xyz,
// T1.xyz ... TL.xyz and curve.json.
inline DatasetManifest generate_dataset(const std::filesystem::path& out,
                                        const DatasetOptions& opt) {
  if (opt.curves == 0) throw ValidationError("dataset needs at least one curve");
  if (opt.n0 < opt.min_points || opt.n0 < 3) {
    throw ValidationError("--n0 " + std::to_string(opt.n0) +
                          " is below the network minimum of " +
                          std::to_string(opt.min_points));
  }
  if (opt.levels < 1) throw ValidationError("--levels must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw Error("cannot create " + out.string() + ": " + ec.message());

  DatasetManifest manifest{opt.n0, opt.levels, opt.seed, {}};
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < opt.curves; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "ex%04zu", i);
    ParametricCurve curve = generate_curve(dataset_curve_kind(i), opt.seed + i);
    TrainingExample ex = build_example(curve, opt.n0, opt.levels, opt.min_points);
    DatasetEntry entry{id,
                       (opt.test_every && i % opt.test_every == opt.test_every - 1)
                           ? "test"
                           : "train",
                       curve.spec(), id};
    std::filesystem::create_directories(out / entry.dir, ec);
    if (ec) throw Error("cannot create " + (out / entry.dir).string());
    write_points(out / entry.dir / level_file(0), ex.input);
    nlohmann::json files;
    files["P0"] = (entry.dir / level_file(0)).generic_string();
    for (std::size_t l = 1; l <= opt.levels; ++l) {
      write_points(out / entry.dir / level_file(l), ex.reference(l));
      files["T" + std::to_string(l)] = (entry.dir / level_file(l)).generic_string();
    }
    {
      std::ofstream cf(out / entry.dir / "curve.json");
      cf << curve_to_json(entry.curve).dump(2) << "\n";
    }
    entries.push_back({{"id", entry.id},
                       {"split", entry.split},
                       {"curve", curve_to_json(entry.curve)},
                       {"dir", entry.dir.generic_string()},
                       {"files", files}});
    manifest.entries.push_back(std::move(entry));
  }
  nlohmann::json j = {{"format", "ppu-dataset-1"},
                      {"seed", opt.seed},
                      {"n0", opt.n0},
                      {"levels", opt.levels},
                      {"examples", entries}};
  std::ofstream mf(out / "manifest.json");
  if (!mf) throw Error("cannot write manifest in " + out.string());
  mf << j.dump(2) << "\n";
  return manifest;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("format", "") != "ppu-dataset-1") {
      throw FormatError(path.string() + ": not a ppu-dataset-1 manifest");
    }
    DatasetManifest m;
    m.n0 = j.at("n0").get<std::size_t>();
    m.levels = j.at("levels").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("examples")) {
      m.entries.push_back({e.at("id").get<std::string>(),
                           e.at("split").get<std::string>(),
                           curve_from_json(e.at("curve")),
                           e.at("dir").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Loads every example of `split` ("train", "test" or "" for all) with
// references up to `levels`.
inline std::vector<TrainingExample> load_dataset(const std::filesystem::path& manifest_path,
                                                 const std::string& split,
                                                 std::size_t levels) {
  const DatasetManifest m = read_manifest(manifest_path);
  if (levels > m.levels) {
    throw ValidationError("dataset provides " + std::to_string(m.levels) +
                          " reference levels, " + std::to_string(levels) +
                          " requested");
  }
  const auto root = manifest_path.parent_path();
  std::vector<TrainingExample> out;
  for (const DatasetEntry& e : m.entries) {
    if (!split.empty() && e.split != split) continue;
    TrainingExample ex;
    ex.input = read_points(root / e.dir / level_file(0));
    for (std::size_t l = 1; l <= levels; ++l) {
      const auto file = root / e.dir / level_file(l);
      if (!std::filesystem::exists(file)) {
        throw ValidationError("example " + e.id + " is missing reference level " +
                              std::to_string(l));
      }
      ex.references.push_back(read_points(file));
    }
    ex.curve = e.curve;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace ppu
