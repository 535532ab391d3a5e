#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "geoflow/suite.hpp"

using namespace geoflow;

namespace {

class SuiteRun : public ::testing::Test {
protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("geoflow_suite_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  SuiteContext context(const std::string& sub, std::uint64_t seed = 0) const {
    SuiteContext ctx;
    ctx.cfg.seed = seed;
    ctx.out = root_ / sub;
    return ctx;
  }

  fs::path root_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + GEOFLOW_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(SuiteRun, EpSuiteReportsSlopesAndCosines) {
  std::ostringstream log;
  const auto rep = run_suite("ep", context("ep"), log);
  EXPECT_EQ(rep.exit_code, 0) << log.str();
  ASSERT_EQ(rep.checks.size(), 2u);
  const std::string manifest = slurp(root_ / "ep" / "manifest.txt");
  EXPECT_NE(manifest.find("one-sided slope"), std::string::npos);
  EXPECT_NE(manifest.find("symmetric slope"), std::string::npos);
  EXPECT_NE(manifest.find("cosine"), std::string::npos);
  EXPECT_NE(manifest.find("[config]"), std::string::npos);
  EXPECT_NE(manifest.find("result PASS"), std::string::npos);
  for (const char* f : {"ep_teacher.csv", "ep_teacher_symmetric.csv", "ep_shooting.csv"})
    EXPECT_EQ(first_line(root_ / "ep" / f), "xi,ep_error,cosine") << f;
}

TEST_F(SuiteRun, SameSeedGivesByteIdenticalArtifacts) {
  std::ostringstream log;
  run_suite("lddmm", context("a", 5), log);
  run_suite("lddmm", context("b", 5), log);
  run_suite("lddmm", context("c", 6), log);
  for (const char* f : {"lddmm_gradient_check.csv", "lddmm_trace.csv", "lddmm_warped.pgm", "lddmm_displacement.gfld",
                        "manifest.txt"})
    EXPECT_EQ(slurp(root_ / "a" / f), slurp(root_ / "b" / f)) << f;
  EXPECT_NE(slurp(root_ / "a" / "lddmm_gradient_check.csv"), slurp(root_ / "c" / "lddmm_gradient_check.csv"));
  EXPECT_EQ(first_line(root_ / "a" / "lddmm_trace.csv"), "iter,energy,kinetic,data,step");
}

TEST_F(SuiteRun, MissingInputExitsTwoAndNamesThePath) {
  auto ctx = context("missing");
  ctx.i0 = root_ / "no_such_template.pgm";
  ctx.i1 = root_ / "no_such_target.pgm";
  std::ostringstream log;
  const auto rep = run_suite("lddmm", ctx, log);
  EXPECT_EQ(rep.exit_code, 2);
  EXPECT_TRUE(rep.checks.empty());
  const std::string manifest = slurp(root_ / "missing" / "manifest.txt");
  EXPECT_NE(manifest.find("no_such_template.pgm"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("result ERROR"), std::string::npos);
}

TEST_F(SuiteRun, InputImagesReplaceTheSyntheticPair) {
  const auto b = blob_pair(16, 2.0, 3.0);
  write_pgm(root_ / "i0.pgm", b.I0);
  write_pgm(root_ / "i1.pgm", b.I1);
  auto ctx = context("inputs");
  ctx.i0 = root_ / "i0.pgm";
  ctx.i1 = root_ / "i1.pgm";
  ctx.cfg.opt_max_iters = 5;
  fs::create_directories(ctx.out);
  const auto r = check_lddmm_registration(ctx);
  EXPECT_NE(r.measured.find("data term"), std::string::npos);
  EXPECT_EQ(read_gfld_vector(root_ / "inputs" / "lddmm_displacement.gfld").grid(), Grid(16, 16));
}

TEST_F(SuiteRun, UnknownSuiteAndHalfInputsAreInputErrors) {
  std::ostringstream log;
  EXPECT_EQ(run_suite("everything", context("u"), log).exit_code, 2);
  auto ctx = context("half");
  ctx.i0 = root_ / "x.pgm";
  EXPECT_EQ(run_suite("lddmm", ctx, log).exit_code, 2);
}

TEST_F(SuiteRun, SuiteMembership) {
  EXPECT_EQ(entries_for("all").size(), 9u);
  EXPECT_EQ(entries_for("unitary").size(), 2u);
  EXPECT_EQ(entries_for("svf").front().id, 7);
  EXPECT_THROW(entries_for("nope"), DomainError);
}

TEST(CsvWriter, HeaderAndShortestRoundTripCells) {
  const fs::path p = fs::temp_directory_path() / "geoflow_csv_writer.csv";
  {
    CsvWriter csv(p, {"a", "b", "c"});
    csv.row(1, 0.1, std::string("x"));
    EXPECT_THROW(csv.row(1, 2.0), DomainError);
  }
  EXPECT_EQ(slurp(p), "a,b,c\n1,0.1,x\n");
  fs::remove(p);
}

TEST_F(SuiteRun, CliExitCodes) {
  const std::string out = "--out \"" + (root_ / "cli").string() + "\"";
  EXPECT_EQ(run_cli("ep demo --model scalar --xi 0.01 " + out), 0);
  EXPECT_EQ(first_line(root_ / "cli" / "ep_scalar.csv"), "xi,ep_error,cosine");
  EXPECT_EQ(run_cli("register lddmm --i0 /no/such.pgm --i1 /no/such.pgm " + out), 2);
  EXPECT_EQ(run_cli("ep demo --set kernel.sigma=-1 " + out), 2);
  EXPECT_EQ(run_cli("ep demo --set kernel.width=1 " + out), 2);
  EXPECT_EQ(run_cli("suite nope " + out), 2);
  EXPECT_EQ(run_cli("unitary distance --n 1 --q 1 --target exp:X:0.5 " + out), 0);
  EXPECT_EQ(run_cli("unitary distance --n 1 --target /no/such/matrix.txt " + out), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST_F(SuiteRun, CliHonoursGeoflowOut) {
  const fs::path dir = root_ / "env";
  const std::string cmd = "GEOFLOW_OUT=\"" + dir.string() + "\" \"" + GEOFLOW_CLI_PATH +
                          "\" unitary curvature --n 2 --q 4 --samples 100 --seed 1 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(first_line(dir / "curvature.csv"), "plane_id,curvature");
}
