#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgan/errors.hpp"
#include "ecgan/faces_synth.hpp"

// Dataset assembly and disk layout. A dataset directory holds images/,
// landmarks/, masks/ and an index.json that is the single source of truth for
// split membership; files are only ever located through the index.

namespace ecgan {

struct DatasetSplit {
  std::vector<ExpressionLabel> expressions;  // [0] is always neutral
  int height = 0, width = 0;
  std::uint64_t seed = 0;
  int n_identities = 0;
  double test_fraction = 0.0;
  std::vector<Sample> domain_x;  // neutral, training
  std::vector<Sample> domain_y;  // expressive, training
  std::vector<Sample> test_x, test_y;
};

inline bool operator==(const DatasetSplit& a, const DatasetSplit& b) {
  return a.expressions == b.expressions && a.height == b.height &&
         a.width == b.width && a.seed == b.seed &&
         a.n_identities == b.n_identities && a.test_fraction == b.test_fraction &&
         a.domain_x == b.domain_x && a.domain_y == b.domain_y &&
         a.test_x == b.test_x && a.test_y == b.test_y;
}

// Identities are partitioned so the two domains have roughly equal image
// counts: the y side renders K-1 expressions per identity, so it gets ~n/K
// identities. Test identities come off the tail of each side's list; no
// identity ever appears in more than one of the four groups.
inline DatasetSplit generate_dataset(int n_identities,
                                     const std::vector<ExpressionLabel>& expressions,
                                     int height, int width, std::uint64_t seed,
                                     double test_fraction) {
  if (n_identities < 4)
    throw std::invalid_argument("generate_dataset: need at least 4 identities "
                                "for a disjoint two-domain split");
  if (!(test_fraction > 0.0 && test_fraction < 0.5))
    throw std::invalid_argument("generate_dataset: test fraction must be in (0, 0.5)");
  if (expressions.size() < 2)
    throw std::invalid_argument("generate_dataset: need neutral plus at least "
                                "one expression");
  std::vector<std::string> names_in;
  for (const auto& e : expressions) names_in.push_back(e.name);
  if (make_expression_set(names_in) != expressions)
    throw std::invalid_argument("generate_dataset: expression indices must be "
                                "dense and start at neutral");
  for (const auto& e : expressions) expression_recipe(e.name);  // known names only

  const int k = static_cast<int>(expressions.size());
  std::vector<int> ids(static_cast<std::size_t>(n_identities));
  for (int i = 0; i < n_identities; ++i) ids[static_cast<std::size_t>(i)] = i;
  Rng split_rng(mix_seed(seed, 0x5117));
  split_rng.shuffle(ids.begin(), ids.end());

  const int y_count = std::max(2, n_identities / k);
  const int x_count = n_identities - y_count;
  const int test_x_count = static_cast<int>(test_fraction * x_count);
  const int test_y_count = static_cast<int>(test_fraction * y_count);

  DatasetSplit out;
  out.expressions = expressions;
  out.height = height;
  out.width = width;
  out.seed = seed;
  out.n_identities = n_identities;
  out.test_fraction = test_fraction;

  auto render_neutral = [&](int id) {
    return render_face(make_identity(seed, id, height, width), expressions[0],
                       height, width);
  };
  for (int i = 0; i < x_count; ++i) {
    const int id = ids[static_cast<std::size_t>(i)];
    (i < x_count - test_x_count ? out.domain_x : out.test_x)
        .push_back(render_neutral(id));
  }
  for (int i = 0; i < y_count; ++i) {
    const int id = ids[static_cast<std::size_t>(x_count + i)];
    const IdentitySpec spec = make_identity(seed, id, height, width);
    auto& dst = i < y_count - test_y_count ? out.domain_y : out.test_y;
    for (int e = 1; e < k; ++e)
      dst.push_back(render_face(spec, expressions[static_cast<std::size_t>(e)],
                                height, width));
  }

  // The unpaired-training guarantee; cheap enough to verify on every call.
  std::vector<bool> in_x(static_cast<std::size_t>(n_identities), false);
  for (const auto& s : out.domain_x) in_x[static_cast<std::size_t>(s.identity_id)] = true;
  for (const auto& s : out.test_x) in_x[static_cast<std::size_t>(s.identity_id)] = true;
  for (const auto& s : out.domain_y)
    if (in_x[static_cast<std::size_t>(s.identity_id)])
      throw std::logic_error("generate_dataset: identity leaked across domains");
  for (const auto& s : out.test_y)
    if (in_x[static_cast<std::size_t>(s.identity_id)])
      throw std::logic_error("generate_dataset: identity leaked across domains");
  return out;
}

// ---------------------------------------------------------------------------
// Disk format
// ---------------------------------------------------------------------------

namespace detail {

inline std::string sample_stem(const Sample& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d_%s", s.identity_id, s.label.name.c_str());
  return buf;
}

inline nlohmann::json landmarks_to_json(const Landmarks& lm) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : lm.points) pts.push_back({p.row, p.col});
  return nlohmann::json{{"points", pts}};
}

inline Landmarks landmarks_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.contains("points") || !j["points"].is_array())
    throw FormatError(where + ": landmark file lacks a points array");
  Landmarks lm;
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 2)
      throw FormatError(where + ": landmark entries must be [row, col] pairs");
    lm.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return lm;
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace detail

// Maps the 68-point annotation convention (17 jaw points, 5+5 brows, 6+6
// eyes, 20 mouth) onto the 20-point schema used throughout this project.
inline Landmarks convert_landmarks_68(const Landmarks& lm68) {
  if (lm68.points.size() != 68)
    throw std::invalid_argument("convert_landmarks_68: expected 68 points, got " +
                                std::to_string(lm68.points.size()));
  static constexpr int kMap[kLandmarkCount] = {
      0, 2, 4, 6, 10, 12, 14, 16,  // jaw outline, chin skipped
      36, 39, 21, 17,              // left eye corners, left brow inner/outer
      42, 45, 22, 26,              // right eye corners, right brow inner/outer
      48, 54, 51, 57,              // mouth corners, top, bottom
  };
  Landmarks out;
  out.points.resize(kLandmarkCount);
  for (int i = 0; i < kLandmarkCount; ++i)
    out.points[static_cast<std::size_t>(i)] =
        lm68.points[static_cast<std::size_t>(kMap[i])];
  return out;
}

inline void save_dataset(const DatasetSplit& split, const std::string& directory) {
  namespace fs = std::filesystem;
  const fs::path root(directory);
  fs::create_directories(root / "images");
  fs::create_directories(root / "landmarks");
  fs::create_directories(root / "masks");

  nlohmann::json index;
  index["format"] = "ecgan-dataset";
  index["version"] = 1;
  index["seed"] = split.seed;
  index["k"] = split.expressions.size();
  index["height"] = split.height;
  index["width"] = split.width;
  index["n_identities"] = split.n_identities;
  index["test_fraction"] = split.test_fraction;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& e : split.expressions) names.push_back(e.name);
  index["expressions"] = names;

  auto write_group = [&](const char* key, const std::vector<Sample>& group) {
    nlohmann::json rows = nlohmann::json::array();
    for (const Sample& s : group) {
      const std::string stem = detail::sample_stem(s);
      const std::string image_rel = "images/" + stem + ".png";
      const std::string lm_rel = "landmarks/" + stem + ".json";
      write_png((root / image_rel).string(), image_to_bytes(s.image));
      std::ofstream lm_out(root / lm_rel);
      lm_out << detail::landmarks_to_json(s.landmarks).dump(2) << "\n";
      nlohmann::json row{{"identity", s.identity_id},
                         {"expression", s.label.name},
                         {"image", image_rel},
                         {"landmarks", lm_rel}};
      if (s.mask) {
        const std::string mask_rel = "masks/" + stem + ".png";
        write_png((root / mask_rel).string(), mask_to_bytes(*s.mask));
        row["mask"] = mask_rel;
      }
      rows.push_back(std::move(row));
    }
    index["samples"][key] = std::move(rows);
  };
  write_group("domain_x", split.domain_x);
  write_group("domain_y", split.domain_y);
  write_group("test_x", split.test_x);
  write_group("test_y", split.test_y);

  std::ofstream out(root / "index.json");
  if (!out) throw FormatError("cannot write " + (root / "index.json").string());
  out << index.dump(2) << "\n";
}

inline DatasetSplit load_dataset(const std::string& directory) {
  namespace fs = std::filesystem;
  const fs::path root(directory);
  const fs::path index_path = root / "index.json";
  if (!fs::exists(index_path))
    throw FormatError("missing dataset index " + index_path.string());
  nlohmann::json index = detail::load_json_file(index_path);

  DatasetSplit split;
  try {
    split.seed = index.at("seed").get<std::uint64_t>();
    split.height = index.at("height").get<int>();
    split.width = index.at("width").get<int>();
    split.n_identities = index.at("n_identities").get<int>();
    split.test_fraction = index.at("test_fraction").get<double>();
    std::vector<std::string> names =
        index.at("expressions").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < names.size(); ++i)
      split.expressions.push_back({static_cast<int>(i), names[i]});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(index_path.string() + ": " + e.what());
  }
  if (split.expressions.empty() || split.expressions[0].name != "neutral")
    throw FormatError(index_path.string() + ": expression list must start with neutral");

  auto load_group = [&](const char* key) {
    std::vector<Sample> group;
    if (!index.contains("samples") || !index["samples"].contains(key))
      throw FormatError(index_path.string() + ": missing samples." + key);
    for (const auto& row : index["samples"][key]) {
      Sample s;
      std::string expr;
      std::string image_rel, lm_rel;
      try {
        s.identity_id = row.at("identity").get<int>();
        expr = row.at("expression").get<std::string>();
        image_rel = row.at("image").get<std::string>();
        lm_rel = row.at("landmarks").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(index_path.string() + ": " + e.what());
      }
      bool found = false;
      for (const auto& lbl : split.expressions)
        if (lbl.name == expr) {
          s.label = lbl;
          found = true;
        }
      if (!found)
        throw FormatError(index_path.string() + ": unknown expression '" + expr + "'");

      ByteImage bytes = read_png((root / image_rel).string());
      if (bytes.dim(0) != 3 ||
          static_cast<int>(bytes.dim(1)) != split.height ||
          static_cast<int>(bytes.dim(2)) != split.width)
        throw FormatError((root / image_rel).string() + ": wrong image shape");
      s.image = bytes_to_image(bytes);

      Landmarks lm = detail::landmarks_from_json(
          detail::load_json_file(root / lm_rel), (root / lm_rel).string());
      if (lm.points.size() == 68) lm = convert_landmarks_68(lm);
      if (lm.points.size() != kLandmarkCount)
        throw FormatError((root / lm_rel).string() + ": expected " +
                          std::to_string(kLandmarkCount) + " or 68 landmarks, got " +
                          std::to_string(lm.points.size()));
      s.landmarks = std::move(lm);

      if (row.contains("mask") && !row["mask"].is_null()) {
        const std::string mask_rel = row["mask"].get<std::string>();
        Tensor mask = bytes_to_mask(read_png((root / mask_rel).string()));
        if (static_cast<int>(mask.dim(0)) != split.height ||
            static_cast<int>(mask.dim(1)) != split.width)
          throw FormatError((root / mask_rel).string() + ": wrong mask shape");
        s.mask = std::move(mask);
      }
      group.push_back(std::move(s));
    }
    return group;
  };
  split.domain_x = load_group("domain_x");
  split.domain_y = load_group("domain_y");
  split.test_x = load_group("test_x");
  split.test_y = load_group("test_y");
  return split;
}

}  // namespace ecgan
