#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgan/classifier.hpp"
#include "ecgan/errors.hpp"
#include "ecgan/nets.hpp"

// Checkpoint archive: one file holding named f64 parameter blocks plus a JSON
// metadata record. Layout (all integers little-endian unsigned 64-bit):
//
//   bytes 0..9   magic "ECGANCKPT1"
//   u64          metadata length, then that many bytes of compact JSON
//   u64          block count
//   per block:   u64 name length, name bytes, u64 ndim, u64 dims..., f64 data
//
// Block names are dotted paths ("g_xy.enc1.w", "classifier.stage2.conv1.b",
// "adam.d_x.head.w.m"); the full list for each model kind comes from the
// named_blocks() enumerators below. Files are written to a temp name and
// renamed into place, so readers never observe a half-written archive.

namespace ecgan {

struct Checkpoint {
  nlohmann::json metadata;
  std::vector<std::pair<std::string, Tensor>> blocks;

  const Tensor& block(const std::string& name) const {
    for (const auto& [n, t] : blocks)
      if (n == name) return t;
    throw FormatError("checkpoint: missing block '" + name + "'");
  }
  bool has_block(const std::string& name) const {
    for (const auto& [n, t] : blocks)
      if (n == name) return true;
    return false;
  }
};

namespace detail {

constexpr char kCheckpointMagic[10] = {'E', 'C', 'G', 'A', 'N',
                                       'C', 'K', 'P', 'T', '1'};

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError(path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
    const std::string meta = ckpt.metadata.dump();
    detail::write_u64(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::write_u64(out, ckpt.blocks.size());
    for (const auto& [name, t] : ckpt.blocks) {
      detail::write_u64(out, name.size());
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_u64(out, t.ndim());
      for (std::size_t d = 0; d < t.ndim(); ++d) detail::write_u64(out, t.dim(d));
      static_assert(sizeof(double) == 8);
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * 8));
    }
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  char magic[sizeof detail::kCheckpointMagic];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, detail::kCheckpointMagic))
    throw FormatError(path + ": not a checkpoint archive (bad magic)");

  Checkpoint ckpt;
  const std::uint64_t meta_len = detail::read_u64(in, path);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw FormatError(path + ": truncated checkpoint");
  try {
    ckpt.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad metadata: " + e.what());
  }

  const std::uint64_t n_blocks = detail::read_u64(in, path);
  for (std::uint64_t i = 0; i < n_blocks; ++i) {
    const std::uint64_t name_len = detail::read_u64(in, path);
    if (name_len > 4096) throw FormatError(path + ": implausible block name");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const std::uint64_t ndim = detail::read_u64(in, path);
    if (ndim == 0 || ndim > 8) throw FormatError(path + ": implausible rank");
    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(detail::read_u64(in, path));
      count *= d;
    }
    if (count > (std::size_t{1} << 32))
      throw FormatError(path + ": implausible block size");
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(count * 8));
    if (!in) throw FormatError(path + ": truncated checkpoint");
    ckpt.blocks.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Named-block enumeration
// ---------------------------------------------------------------------------

using NamedBlocks = std::vector<std::pair<std::string, Tensor*>>;

inline NamedBlocks named_blocks(GeneratorParams& p, const std::string& prefix) {
  return {{prefix + ".enc1.w", &p.enc1.w},   {prefix + ".enc1.b", &p.enc1.b},
          {prefix + ".enc2.w", &p.enc2.w},   {prefix + ".enc2.b", &p.enc2.b},
          {prefix + ".fc_in.w", &p.fc_in.w}, {prefix + ".fc_in.b", &p.fc_in.b},
          {prefix + ".fc_out.w", &p.fc_out.w}, {prefix + ".fc_out.b", &p.fc_out.b},
          {prefix + ".dec1.w", &p.dec1.w},   {prefix + ".dec1.b", &p.dec1.b},
          {prefix + ".dec2.w", &p.dec2.w},   {prefix + ".dec2.b", &p.dec2.b}};
}

inline NamedBlocks named_blocks(DiscriminatorParams& p, const std::string& prefix) {
  return {{prefix + ".conv1.w", &p.conv1.w}, {prefix + ".conv1.b", &p.conv1.b},
          {prefix + ".conv2.w", &p.conv2.w}, {prefix + ".conv2.b", &p.conv2.b},
          {prefix + ".conv3.w", &p.conv3.w}, {prefix + ".conv3.b", &p.conv3.b},
          {prefix + ".head.w", &p.head.w},   {prefix + ".head.b", &p.head.b}};
}

inline NamedBlocks named_blocks(Models& m) {
  NamedBlocks out;
  for (auto&& part : {named_blocks(m.g_xy, "g_xy"), named_blocks(m.g_yx, "g_yx"),
                      named_blocks(m.d_x, "d_x"), named_blocks(m.d_y, "d_y")})
    out.insert(out.end(), part.begin(), part.end());
  return out;
}

inline NamedBlocks named_blocks(ClassifierParams& p) {
  NamedBlocks out;
  for (int s = 0; s < 3; ++s) {
    const std::string prefix = "classifier.stage" + std::to_string(s + 1);
    auto& st = p.stages[static_cast<std::size_t>(s)];
    out.push_back({prefix + ".conv1.w", &st.conv1.w});
    out.push_back({prefix + ".conv1.b", &st.conv1.b});
    out.push_back({prefix + ".conv2.w", &st.conv2.w});
    out.push_back({prefix + ".conv2.b", &st.conv2.b});
  }
  out.push_back({"classifier.fc1.w", &p.fc1.w});
  out.push_back({"classifier.fc1.b", &p.fc1.b});
  out.push_back({"classifier.head.w", &p.head.w});
  out.push_back({"classifier.head.b", &p.head.b});
  return out;
}

// ---------------------------------------------------------------------------
// Arch config serialization
// ---------------------------------------------------------------------------

inline nlohmann::json arch_to_json(const ArchConfig& a) {
  return {{"image_size", a.image_size},
          {"image_channels", a.image_channels},
          {"num_classes", a.num_classes},
          {"enc_ch1", a.enc_ch1},
          {"enc_ch2", a.enc_ch2},
          {"bottleneck_width", a.bottleneck_width},
          {"disc_ch1", a.disc_ch1},
          {"disc_ch2", a.disc_ch2},
          {"disc_ch3", a.disc_ch3},
          {"condition_bottleneck", a.condition_bottleneck},
          {"d_condition", a.d_condition == DiscriminatorCondition::kTiledConcat
                              ? "tiled_concat"
                              : "none"}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.image_size = j.at("image_size").get<int>();
    a.image_channels = j.at("image_channels").get<int>();
    a.num_classes = j.at("num_classes").get<int>();
    a.enc_ch1 = j.at("enc_ch1").get<int>();
    a.enc_ch2 = j.at("enc_ch2").get<int>();
    a.bottleneck_width = j.at("bottleneck_width").get<int>();
    a.disc_ch1 = j.at("disc_ch1").get<int>();
    a.disc_ch2 = j.at("disc_ch2").get<int>();
    a.disc_ch3 = j.at("disc_ch3").get<int>();
    a.condition_bottleneck = j.at("condition_bottleneck").get<bool>();
    const std::string dc = j.at("d_condition").get<std::string>();
    if (dc == "tiled_concat") a.d_condition = DiscriminatorCondition::kTiledConcat;
    else if (dc == "none") a.d_condition = DiscriminatorCondition::kNone;
    else throw FormatError("unknown discriminator condition mode '" + dc + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad arch record: ") + e.what());
  }
  a.validate();
  return a;
}

inline nlohmann::json classifier_arch_to_json(const ClassifierArch& a) {
  return {{"image_size", a.image_size},
          {"image_channels", a.image_channels},
          {"num_classes", a.num_classes},
          {"stage_channels", a.stage_channels},
          {"feature_dim", a.feature_dim}};
}

inline ClassifierArch classifier_arch_from_json(const nlohmann::json& j) {
  ClassifierArch a;
  try {
    a.image_size = j.at("image_size").get<int>();
    a.image_channels = j.at("image_channels").get<int>();
    a.num_classes = j.at("num_classes").get<int>();
    a.stage_channels = j.at("stage_channels").get<std::array<int, 3>>();
    a.feature_dim = j.at("feature_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad classifier arch record: ") + e.what());
  }
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// Model <-> checkpoint
// ---------------------------------------------------------------------------

inline void append_blocks(Checkpoint& ckpt, const NamedBlocks& blocks) {
  for (const auto& [name, t] : blocks) ckpt.blocks.emplace_back(name, *t);
}

// Copies checkpoint tensors into an already-shaped parameter struct; shapes
// must match block for block.
inline void restore_blocks(const Checkpoint& ckpt, const NamedBlocks& blocks) {
  for (auto& [name, t] : blocks) {
    const Tensor& src = ckpt.block(name);
    if (src.shape() != t->shape())
      throw FormatError("checkpoint block '" + name + "' has shape " +
                        shape_string(src) + ", expected " + shape_string(*t));
    *t = src;
  }
}

inline Checkpoint make_translation_checkpoint(
    const Models& models, const ArchConfig& arch,
    const std::vector<ExpressionLabel>& expressions, std::uint64_t seed,
    long iteration) {
  Checkpoint ckpt;
  ckpt.metadata["format"] = "ecgan-checkpoint";
  ckpt.metadata["version"] = 1;
  ckpt.metadata["kind"] = "translation";
  ckpt.metadata["arch"] = arch_to_json(arch);
  ckpt.metadata["k"] = arch.num_classes;
  ckpt.metadata["seed"] = seed;
  ckpt.metadata["iteration"] = iteration;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& e : expressions) names.push_back(e.name);
  ckpt.metadata["expressions"] = names;
  append_blocks(ckpt, named_blocks(const_cast<Models&>(models)));
  return ckpt;
}

struct TranslationCheckpoint {
  Models models;
  ArchConfig arch;
  std::vector<ExpressionLabel> expressions;
  std::uint64_t seed = 0;
  long iteration = 0;
};

inline TranslationCheckpoint translation_from_checkpoint(const Checkpoint& ckpt) {
  TranslationCheckpoint out;
  try {
    if (ckpt.metadata.at("kind").get<std::string>() != "translation")
      throw FormatError("checkpoint kind is not 'translation'");
    out.arch = arch_from_json(ckpt.metadata.at("arch"));
    out.seed = ckpt.metadata.at("seed").get<std::uint64_t>();
    out.iteration = ckpt.metadata.at("iteration").get<long>();
    out.expressions = make_expression_set(
        ckpt.metadata.at("expressions").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  out.models = init_params(out.arch, 0);  // shapes only; overwritten below
  restore_blocks(ckpt, named_blocks(out.models));
  return out;
}

inline Checkpoint make_classifier_checkpoint(const ClassifierParams& params,
                                             const ClassifierArch& arch,
                                             std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.metadata["format"] = "ecgan-checkpoint";
  ckpt.metadata["version"] = 1;
  ckpt.metadata["kind"] = "classifier";
  ckpt.metadata["arch"] = classifier_arch_to_json(arch);
  ckpt.metadata["k"] = arch.num_classes;
  ckpt.metadata["seed"] = seed;
  append_blocks(ckpt, named_blocks(const_cast<ClassifierParams&>(params)));
  return ckpt;
}

struct ClassifierCheckpoint {
  ClassifierParams params;
  ClassifierArch arch;
  std::uint64_t seed = 0;
};

inline ClassifierCheckpoint classifier_from_checkpoint(const Checkpoint& ckpt) {
  ClassifierCheckpoint out;
  try {
    if (ckpt.metadata.at("kind").get<std::string>() != "classifier")
      throw FormatError("checkpoint kind is not 'classifier'");
    out.arch = classifier_arch_from_json(ckpt.metadata.at("arch"));
    out.seed = ckpt.metadata.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  Rng shape_rng(0);
  out.params = init_classifier(out.arch, shape_rng);  // shapes only; overwritten below
  restore_blocks(ckpt, named_blocks(out.params));
  return out;
}

}  // namespace ecgan
