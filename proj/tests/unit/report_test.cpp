#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dustk/errors.hpp"
#include "dustk/manifest.hpp"
#include "dustk/report.hpp"

namespace dustk {
namespace {

TEST(H6, TableRows) {
  const double solar[] = {71.08, 88.16, 66.21, 71.43, 83.58, 64.75};
  const double mistral[] = {59.98, 83.31, 64.16, 42.15, 78.37, 37.83};
  EXPECT_EQ(format_score(h6_average(solar)), "74.20");
  EXPECT_EQ(format_score(h6_average(mistral)), "60.97");
  EXPECT_DOUBLE_EQ(h6_average(solar), 74.20);
}

TEST(H6, EqualScoresAndErrors) {
  for (double x : {0.0, 12.34, 55.55, 100.0}) {
    const double six[] = {x, x, x, x, x, x};
    EXPECT_DOUBLE_EQ(h6_average(six), x);
  }
  const double five[] = {1, 2, 3, 4, 5};
  EXPECT_THROW(h6_average(five), ValidationError);
  const double high[] = {1, 2, 3, 4, 5, 100.5};
  EXPECT_THROW(h6_average(high), ValidationError);
  const double low[] = {-1, 2, 3, 4, 5, 6};
  EXPECT_THROW(h6_average(low), ValidationError);
}

TEST(Rounding, HalfUp) {
  EXPECT_DOUBLE_EQ(round_half_up(74.205, 2), 74.21);
  EXPECT_DOUBLE_EQ(round_half_up(74.2049, 2), 74.20);
  EXPECT_DOUBLE_EQ(round_half_up(0.125, 2), 0.13);
  EXPECT_DOUBLE_EQ(round_half_up(2.5, 0), 3.0);
  EXPECT_EQ(format_score(7.0), "7.00");
}

TEST(Manifest, DigestsAndJson) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto dir = std::filesystem::temp_directory_path() / "dustk_manifest_test";
  std::filesystem::create_directories(dir);
  const auto in = dir / "in.txt";
  std::ofstream(in) << "abc";
  RunManifest m;
  m.command_line = "dustk scale";
  m.inputs = {in.string()};
  m.outputs = {(dir / "missing.bin").string()};
  m.finalize();
  EXPECT_EQ(m.digests.at(in.string()), sha256_hex("abc"));
  EXPECT_FALSE(m.digests.contains((dir / "missing.bin").string()));
  const auto j = m.to_json();
  EXPECT_EQ(j["tool_version"], kToolVersion);
  EXPECT_EQ(j["command_line"], "dustk scale");
  EXPECT_FALSE(j["timestamp"].get<std::string>().empty());
  EXPECT_THROW(sha256_file(dir / "missing.bin"), FormatError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace dustk
