#include <gtest/gtest.h>

#include <string>

#include "geoflow/config.hpp"

using namespace geoflow;

namespace {

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
  const ExperimentConfig c = parse_config("");
  const ExperimentConfig d;
  EXPECT_EQ(render_config(c), render_config(d));
  EXPECT_EQ(c.kernel_sigma, 2.0);
  EXPECT_EQ(c.seed, 0u);
}

TEST(Config, CommentsAndBlankLinesAreIgnored) {
  const auto c = parse_config("# header\n\n  kernel.sigma = 3.5   # trailing\n\n");
  EXPECT_EQ(c.kernel_sigma, 3.5);
}

TEST(Config, SectionsPrefixKeys) {
  const auto c = parse_config("seed = 7\n[kernel]\nsigma = 1.5\n[unitary]\nq = 10\nlocal_weight = 1\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.kernel_sigma, 1.5);
  EXPECT_EQ(c.unitary_q, 10.0);
  EXPECT_EQ(c.unitary_local_weight, 1);
}

TEST(Config, OutOfRangeNamesTheKey) {
  const std::string m = message_of("kernel.sigma = -1\n");
  EXPECT_NE(m.find("kernel.sigma"), std::string::npos) << m;
  EXPECT_NE(m.find("line 1"), std::string::npos) << m;
  EXPECT_NE(message_of("unitary.q = 0.5").find("unitary.q"), std::string::npos);
  EXPECT_NE(message_of("unitary.samples = 99").find("unitary.samples"), std::string::npos);
  EXPECT_NE(message_of("optimizer.shrink = 1").find("optimizer.shrink"), std::string::npos);
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    parse_config("kernel.sigma = 2\n\nkernel.width = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3);
    EXPECT_NE(std::string(e.what()).find("kernel.width"), std::string::npos);
  }
}

TEST(Config, DuplicateKeyReportsBothLines) {
  const std::string m = message_of("[kernel]\nsigma = 1\nsigma = 2\n");
  EXPECT_NE(m.find("duplicate key 'kernel.sigma' on lines 2 and 3"), std::string::npos) << m;
}

TEST(Config, MalformedValuesAreRejected) {
  EXPECT_NE(message_of("kernel.sigma = two").find("malformed"), std::string::npos);
  EXPECT_NE(message_of("flow.steps = 3.5").find("malformed"), std::string::npos);
  EXPECT_NE(message_of("seed = -1").find("malformed"), std::string::npos);
  EXPECT_NE(message_of("kernel.sigma = inf").find("kernel.sigma"), std::string::npos);
  EXPECT_NE(message_of("kernel.sigma 2").find("key = value"), std::string::npos);
  EXPECT_NE(message_of("[kernel\nsigma = 1").find("section"), std::string::npos);
  EXPECT_NE(message_of("= 4").find("missing key"), std::string::npos);
}

TEST(Config, RenderParseIsIdempotent) {
  const auto c = parse_config("seed = 18446744073709551615\nkernel.sigma = 0.1\nmatch.weight = 1e4\nep.xi = 3e-5\n");
  const std::string once = render_config(c);
  const std::string twice = render_config(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(parse_config(once).seed, 18446744073709551615ull);
  EXPECT_EQ(parse_config(once).kernel_sigma, 0.1);
  EXPECT_EQ(parse_config(once).ep_xi, 3e-5);
}

TEST(Config, SetValueAppliesOverrides) {
  ExperimentConfig c;
  set_config_value(c, " unitary.q ", " 64 ");
  EXPECT_EQ(c.unitary_q, 64.0);
  EXPECT_THROW(set_config_value(c, "nope", "1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "flow.steps", "1"), ConfigError);
}

TEST(Config, DerivedOptionsFollowFields) {
  const auto c = parse_config("match.weight = 400\nunitary.restarts = 2\nseed = 9\noptimizer.max_iters = 12\n");
  EXPECT_DOUBLE_EQ(c.lddmm_sigma(), 0.05);
  EXPECT_EQ(c.distance().restarts, 2);
  EXPECT_EQ(c.distance().seed, 9u);
  EXPECT_EQ(c.descent().max_iters, 12);
  EXPECT_FALSE(c.squarings().has_value());
  EXPECT_EQ(parse_config("svf.squarings = 6").squarings().value(), 6);
}
