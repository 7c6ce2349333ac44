#include <gtest/gtest.h>

#include <sstream>

#include "manelab/io.hpp"

using namespace manelab;

namespace {
PointCloud sample_cloud() {
  PointCloud c = PointCloud::from_spectrum(Spectrum::linear(1.0, 20));
  c.add(LogModeVector{}, "origin");
  LogModeVector w;
  w.set(3, {1, -2000.5});
  w.set(17, {-1, 0.25});
  c.add(w, "", {0.5, -0.125});
  c.add_planar(-3.0, 0.0);
  c.add(LogModeVector::unit(1, -1e-300, -1));
  return c;
}
}  // namespace

TEST(CloudCsv, RoundTripIsExactInLogSpace) {
  const auto c = sample_cloud();
  std::stringstream ss;
  write_cloud_csv(ss, c);
  const auto back = read_cloud_csv(ss, PointCloud::from_spectrum(Spectrum::linear(1.0, 20)));
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_EQ(back.modal(i).size(), c.modal(i).size());
    for (const auto& e : c.modal(i).entries()) {
      EXPECT_EQ(back.modal(i).get(e.mode).sign, e.value.sign);
      EXPECT_EQ(back.modal(i).get(e.mode).log_mag, e.value.log_mag);
    }
    EXPECT_NEAR(back.planar(i)[0], c.planar(i)[0], 1e-15 * std::abs(c.planar(i)[0]));
    EXPECT_NEAR(back.planar(i)[1], c.planar(i)[1], 1e-15 * std::abs(c.planar(i)[1]));
  }
}

TEST(CloudCsv, RewriteIsByteIdentical) {
  std::stringstream a, b;
  write_cloud_csv(a, sample_cloud());
  const std::string first = a.str();
  write_cloud_csv(b, read_cloud_csv(a, PointCloud::from_spectrum(Spectrum::linear(1.0, 20))));
  EXPECT_EQ(b.str(), first);
}

TEST(CloudCsv, SeventeenDigits) {
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(fmt17(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(CloudCsv, ParseErrorsCarryLineNumbers) {
  const auto base = PointCloud::from_spectrum(Spectrum::linear(1.0, 4));
  struct Case {
    std::string text;
    std::size_t line;
  };
  const std::vector<Case> cases{
      {"point,mode,sign,logmag\n0,1,1,0.5\n0,2,1\n", 3},
      {"point,mode,sign,logmag\n0,1,1,abc\n", 2},
      {"point,mode,sign,logmag\n0,1,1,0\n2,1,1,0\n", 3},
      {"point,mode,sign,logmag\n0,9,1,0\n", 2},
      {"point,mode,sign,logmag\n0,1,2,0\n", 2},
      {"point,mode,sign,logmag\n0,1,1,0\n1,z,1,0\n", 3},
      {"point,mode,sign,logmag\n0,x,0,1\n", 2},
      {"point,mode,sign,logmag\n0,0,1,-inf\n", 2},
      {"point,mode,sign,logmag\n0,1,1,-inf\n", 2},
  };
  for (const auto& c : cases) {
    std::stringstream ss(c.text);
    try {
      read_cloud_csv(ss, base);
      ADD_FAILURE() << "accepted: " << c.text;
    } catch (const CloudParseError& e) {
      EXPECT_EQ(e.line(), c.line) << c.text << " -> " << e.what();
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(c.line)), std::string::npos);
    }
  }
}

TEST(CloudCsv, CommentsAndBlankLinesSkipped) {
  std::stringstream ss("point,mode,sign,logmag\n# note\n\n0,2,-1,-3\r\n1,0,0,-inf\n");
  const auto c = read_cloud_csv(ss, PointCloud::from_spectrum(Spectrum::linear(1.0, 4)));
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.modal(0).get(2).sign, -1);
  EXPECT_TRUE(c.modal(1).empty());
}

TEST(TrajectoryCsv, OneRowPerNonzeroCoordinate) {
  TrajectoryRecord r;
  r.times = {0.0, 0.5};
  CoupledState a;
  a.x = 1.0;
  a.w = LogModeVector::unit(2, -800.0);
  CoupledState b;
  b.y = -0.25;
  r.states = {a, b};
  r.log_norm = {-800.0, neg_inf};
  std::stringstream ss;
  write_trajectory_csv(ss, r);
  EXPECT_EQ(ss.str(), "t,mode,sign,logmag\n0,x,1,0\n0,2,1,-800\n0.5,y,-1," + fmt17(std::log(0.25)) + "\n");
}
