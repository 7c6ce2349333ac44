#include <gtest/gtest.h>

#include "cli_config.hpp"

using namespace manelab::cli;

namespace {
std::vector<std::string> problems(const json& in) {
  try {
    resolve_config(in);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& p, const std::string& needle) {
  for (const auto& s : p)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}
}  // namespace

TEST(Config, EmptyResolvesToDefaults) {
  const auto r = resolve_config(json::object());
  EXPECT_EQ(r["spectrum"]["family"], "linear");
  EXPECT_EQ(r["spectrum"]["params"]["c"], 1.0);
  EXPECT_EQ(r["dynamics"]["n_trunc"], 16);
  EXPECT_EQ(r["output"]["formats"], json::array({"csv", "json"}));
}

TEST(Config, OverridesKeepOtherDefaults) {
  const auto r = resolve_config(json::parse(R"({"drive": {"tau": 0.5}, "spectrum": {"family": "power", "params": {"kappa": 2.5}}})"));
  EXPECT_EQ(r["drive"]["tau"], 0.5);
  EXPECT_EQ(r["drive"]["amplitude"], 1.0);
  EXPECT_EQ(r["spectrum"]["params"]["kappa"], 2.5);
  EXPECT_FALSE(r["spectrum"]["params"].contains("c"));
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_TRUE(mentions(problems(json::parse(R"({"drive": {"tua": 1}})")), "unknown key 'drive.tua'"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"extra": {}})")), "unknown section 'extra'"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"spectrum": {"family": "linear", "params": {"kappa": 2}}})")),
                       "spectrum.params.kappa"));
}

TEST(Config, AllProblemsReportedAtOnce) {
  const auto p = problems(json::parse(R"({"drive": {"tua": 1, "amplitude": "big"}, "dynamics": {"n_trunc": 1.5}})"));
  EXPECT_EQ(p.size(), 3u);
  EXPECT_TRUE(mentions(p, "drive.amplitude: expected number, got string"));
  EXPECT_TRUE(mentions(p, "dynamics.n_trunc: expected integer"));
}

TEST(Config, WholeFloatAcceptedAsInteger) { EXPECT_NO_THROW(resolve_config(json::parse(R"({"dynamics": {"n_trunc": 8.0}})"))); }

TEST(Config, RangeChecks) {
  EXPECT_TRUE(mentions(problems(json::parse(R"({"drive": {"plateau_fraction": 1.0}})")), "plateau_fraction"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"drive": {"tau": -1}})")), "drive.tau"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"geometry": {"cloud": "torus"}})")), "geometry.cloud"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"output": {"formats": ["xml"]}})")), "output.formats"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"spectrum": {"family": "cubic"}})")), "spectrum.family"));
  EXPECT_TRUE(mentions(problems(json::parse(R"({"expect": {"modulus": [1]}})")), "expect.modulus"));
  EXPECT_TRUE(mentions(problems(json::parse("[]")), "top level"));
}

TEST(Config, HashIsDeterministicAndKeyOrderFree) {
  const auto a = resolve_config(json::parse(R"({"drive": {"tau": 2, "amplitude": 1.5}})"));
  const auto b = resolve_config(json::parse(R"({"drive": {"amplitude": 1.5, "tau": 2}})"));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  const auto c = resolve_config(json::parse(R"({"drive": {"tau": 2, "amplitude": 1.5000000000000002}})"));
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Config, HashOfMaterializedDefaultsEqualsEmpty) {
  const auto a = resolve_config(json::object());
  EXPECT_EQ(config_hash(resolve_config(a)), config_hash(a));
}

TEST(Config, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Scales, GeometricEndpoints) {
  const auto s = parse_scales("0.3:0.003:5");
  ASSERT_EQ(s.size(), 5u);
  EXPECT_DOUBLE_EQ(s.front(), 0.3);
  EXPECT_NEAR(s.back(), 0.003, 1e-15);
  EXPECT_NEAR(s[1] / s[0], s[4] / s[3], 1e-12);
}

TEST(Scales, Malformed) {
  EXPECT_THROW(parse_scales("0.3:0.003"), ConfigError);
  EXPECT_THROW(parse_scales("a:b:c"), ConfigError);
  EXPECT_THROW(parse_scales("0.3:0:4"), ConfigError);
  EXPECT_THROW(parse_scales("0.3:0.1:1"), ConfigError);
}
