#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "ecgan/checkpoint.hpp"

namespace ecgan {
namespace {

ArchConfig small_arch() {
  ArchConfig a;
  a.image_size = 16;
  a.image_channels = 2;
  a.num_classes = 3;
  a.enc_ch1 = 3;
  a.enc_ch2 = 4;
  a.bottleneck_width = 6;
  a.disc_ch1 = 3;
  a.disc_ch2 = 4;
  a.disc_ch3 = 5;
  return a;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("ecgan_ckpt_" + name + "_" + std::to_string(::getpid()));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

TEST(Checkpoint, TranslationRoundTripPreservesForwardPass) {
  const ArchConfig arch = small_arch();
  const Models m = init_params(arch, 99);
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});
  const auto path = temp_file("trans");

  save_checkpoint(path.string(),
                  make_translation_checkpoint(m, arch, exprs, 99, 17));
  const TranslationCheckpoint back =
      translation_from_checkpoint(load_checkpoint(path.string()));
  std::filesystem::remove(path);

  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.iteration, 17);
  EXPECT_TRUE(back.expressions == exprs);
  EXPECT_EQ(back.arch.bottleneck_width, arch.bottleneck_width);

  Rng rng(4);
  Tensor image({2, 16, 16});
  for (auto& v : image) v = rng.uniform(-1.0, 1.0);
  const AttributeVector z = encode_attribute(exprs[1], 3);
  const Tensor a = generator_forward(m.g_xy, image, z, nullptr);
  const Tensor b = generator_forward(back.models.g_xy, image, z, nullptr);
  EXPECT_TRUE(a == b);
  const PatchMap pa = discriminator_forward(m.d_y, image, nullptr, nullptr);
  const PatchMap pb = discriminator_forward(back.models.d_y, image, nullptr, nullptr);
  EXPECT_TRUE(pa == pb);
}

TEST(Checkpoint, ClassifierRoundTripPreservesOutputs) {
  ClassifierArch arch;
  arch.image_size = 16;
  arch.image_channels = 1;
  arch.num_classes = 3;
  arch.stage_channels = {3, 4, 5};
  arch.feature_dim = 8;
  Rng init_rng(7);
  const ClassifierParams p = init_classifier(arch, init_rng);
  const auto path = temp_file("clf");

  save_checkpoint(path.string(), make_classifier_checkpoint(p, arch, 7));
  const ClassifierCheckpoint back =
      classifier_from_checkpoint(load_checkpoint(path.string()));
  std::filesystem::remove(path);

  Rng rng(5);
  Tensor image({1, 16, 16});
  for (auto& v : image) v = rng.uniform(-1.0, 1.0);
  EXPECT_TRUE(classify(p, image) == classify(back.params, image));
  EXPECT_TRUE(embed(p, image) == embed(back.params, image));
}

TEST(Checkpoint, SaveIsByteDeterministic) {
  const ArchConfig arch = small_arch();
  const Models m = init_params(arch, 1);
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});
  const auto p1 = temp_file("det1"), p2 = temp_file("det2");
  const Checkpoint ckpt = make_translation_checkpoint(m, arch, exprs, 1, 0);
  save_checkpoint(p1.string(), ckpt);
  save_checkpoint(p2.string(), ckpt);
  EXPECT_EQ(slurp(p1), slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST(Checkpoint, ArbitraryBlocksSurvive) {
  Checkpoint ckpt;
  ckpt.metadata = {{"kind", "scratch"}, {"note", "free-form"}};
  Tensor t({2, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 * static_cast<double>(i);
  ckpt.blocks.emplace_back("alpha.m", t);
  const auto path = temp_file("blocks");
  save_checkpoint(path.string(), ckpt);
  const Checkpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back.metadata["note"], "free-form");
  EXPECT_TRUE(back.block("alpha.m") == t);
  EXPECT_TRUE(back.has_block("alpha.m"));
  EXPECT_FALSE(back.has_block("beta.m"));
  EXPECT_THROW(back.block("beta.m"), FormatError);
}

TEST(Checkpoint, CorruptFilesAreFormatErrors) {
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt"), FormatError);

  const auto bad_magic = temp_file("badmagic");
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "NOTACKPT__ and some garbage";
  }
  EXPECT_THROW(load_checkpoint(bad_magic.string()), FormatError);
  std::filesystem::remove(bad_magic);

  // Truncate a valid archive mid-way through its blocks.
  const ArchConfig arch = small_arch();
  const Models m = init_params(arch, 2);
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});
  const auto full = temp_file("full");
  save_checkpoint(full.string(),
                  make_translation_checkpoint(m, arch, exprs, 2, 0));
  const std::string bytes = slurp(full);
  const auto cut = temp_file("cut");
  {
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() * 2 / 3));
  }
  EXPECT_THROW(load_checkpoint(cut.string()), FormatError);
  std::filesystem::remove(full);
  std::filesystem::remove(cut);
}

TEST(Checkpoint, MissingBlockIsNamedInTheError) {
  const ArchConfig arch = small_arch();
  const Models m = init_params(arch, 3);
  const auto exprs = make_expression_set({"neutral", "happy", "anger"});
  Checkpoint ckpt = make_translation_checkpoint(m, arch, exprs, 3, 0);
  std::erase_if(ckpt.blocks,
                [](const auto& kv) { return kv.first == "g_yx.fc_in.w"; });
  try {
    translation_from_checkpoint(ckpt);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("g_yx.fc_in.w"), std::string::npos);
  }
}

TEST(Checkpoint, WrongKindRejected) {
  ClassifierArch arch;
  arch.image_size = 16;
  arch.image_channels = 1;
  arch.num_classes = 3;
  arch.stage_channels = {3, 4, 5};
  arch.feature_dim = 8;
  Rng rng(7);
  const Checkpoint ckpt =
      make_classifier_checkpoint(init_classifier(arch, rng), arch, 7);
  EXPECT_THROW(translation_from_checkpoint(ckpt), FormatError);
}

}  // namespace
}  // namespace ecgan
