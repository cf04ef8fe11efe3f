#include "ecgan/manifest.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace ecgan {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ecgan_manifest_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

TEST(Manifest, RoundTrip) {
  TempDir td;
  RunManifest m;
  m.command = "train";
  m.config = {{"iterations", 2000}, {"seed", 7}};
  m.inputs = {"dataset/"};
  m.outputs = {"checkpoint-final.ckpt", "metrics.jsonl"};
  m.seed = 7;
  m.started_at = "2026-08-22T10:00:00Z";
  m.finished_at = "2026-08-22T10:19:00Z";
  write_manifest(td.path.string(), m);

  const RunManifest r =
      read_manifest((td.path / "manifest.json").string());
  EXPECT_EQ(r.command, "train");
  EXPECT_EQ(r.config.at("iterations").get<int>(), 2000);
  EXPECT_EQ(r.inputs, m.inputs);
  EXPECT_EQ(r.outputs, m.outputs);
  EXPECT_EQ(r.seed, 7u);
  EXPECT_EQ(r.started_at, m.started_at);
  EXPECT_EQ(r.finished_at, m.finished_at);
  EXPECT_EQ(r.status, "ok");
  // No temp file left behind.
  EXPECT_FALSE(fs::exists(td.path / "manifest.json.tmp"));
}

TEST(Manifest, CreatesDirectoryAndOverwrites) {
  TempDir td;
  const std::string nested = (td.path / "run" / "out").string();
  RunManifest m;
  m.command = "evaluate";
  write_manifest(nested, m);
  m.status = "error: boom";
  write_manifest(nested, m);
  const RunManifest r =
      read_manifest((fs::path(nested) / "manifest.json").string());
  EXPECT_EQ(r.status, "error: boom");
}

TEST(Manifest, ReadRejectsGarbage) {
  TempDir td;
  EXPECT_THROW(read_manifest((td.path / "missing.json").string()),
               FormatError);
  {
    std::ofstream out(td.path / "bad.json");
    out << "{not json";
  }
  EXPECT_THROW(read_manifest((td.path / "bad.json").string()), FormatError);
  {
    std::ofstream out(td.path / "other.json");
    out << "{\"format\": \"something-else\"}";
  }
  EXPECT_THROW(read_manifest((td.path / "other.json").string()), FormatError);
}

TEST(Manifest, TimestampShape) {
  const std::string ts = utc_timestamp();
  ASSERT_EQ(ts.size(), 20u);
  EXPECT_EQ(ts[4], '-');
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts[19], 'Z');
}

}  // namespace
}  // namespace ecgan
