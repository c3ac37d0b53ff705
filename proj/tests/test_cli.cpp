#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <thread>

#include "flim/cli.hpp"
#include "test_util.hpp"

using namespace flim;
using flim::testing::TempDir;

namespace {

int run_cli(std::vector<std::string> args, std::string* err_out = nullptr) {
  args.insert(args.begin(), "flim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), err);
  if (err_out) *err_out = err.str();
  return code;
}

std::map<std::string, std::string> dataset_files(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != cli::kRunManifestName)
      out[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    ASSERT_EQ(run_cli({"phantom", "gen", "--n", "6", "--marked", "2", "--out", ds()}), 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string ds() { return (dir_->path() / "ds").string(); }
  static std::string out(const std::string& name) { return (dir_->path() / name).string(); }
  static inline TempDir* dir_ = nullptr;
};

const std::vector<std::string> kTiny = {"--widths", "4,4,4", "--epochs", "1"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  std::string err;
  EXPECT_EQ(run_cli({}), 2);
  EXPECT_EQ(run_cli({"bogus"}), 2);
  EXPECT_EQ(run_cli({"train", "--nope", "1"}), 2);
  EXPECT_EQ(run_cli({"train", "--regime", "pbp", "--init", "random", "--data", ds(), "--out", out("u1")}, &err), 2);
  EXPECT_NE(err.find("usage error"), std::string::npos);
  EXPECT_EQ(run_cli({"train", "--regime", "fbp", "--init", "flim", "--data", ds(), "--out", out("u2")}), 2);
  EXPECT_EQ(run_cli({"train", "--regime", "ft", "--init", "bank", "--data", ds(), "--out", out("u3")}), 2);
  EXPECT_EQ(run_cli({"train", "--regime", "xyz", "--data", ds(), "--out", out("u4")}), 2);
  EXPECT_EQ(run_cli({"train", "--epochs", "ten", "--data", ds(), "--out", out("u5")}), 2);
  EXPECT_EQ(run_cli({"train", "--widths", "4,4", "--data", ds(), "--out", out("u6")}), 2);
  EXPECT_EQ(run_cli({"msflim", "grid", "--modality", "pet", "--data", ds(), "--out", out("u7")}), 2);
  EXPECT_EQ(run_cli({"eval", "--data", ds(), "--out", out("u8")}), 2);
  EXPECT_EQ(run_cli({"compare", "--out", out("u9")}), 2);
  EXPECT_EQ(run_cli({"compare", "--report", "noequals", "--out", out("u9")}), 2);
  EXPECT_EQ(run_cli({"phantom", "gen", "--n", "6"}), 2);  // no --out

  const auto cfg = dir_->path() / "bad_config.json";
  write_file_atomic(cfg, R"({"epochz": 3})");
  EXPECT_EQ(run_cli({"train", "--config", cfg.string(), "--data", ds(), "--out", out("u10")}), 2);
  write_file_atomic(cfg, R"({"epochs": "3"})");
  EXPECT_EQ(run_cli({"train", "--config", cfg.string(), "--data", ds(), "--out", out("u10")}), 2);

  unsetenv("FLIM_DATA_DIR");
  EXPECT_EQ(run_cli({"flim", "estimate", "--out", out("u11")}), 2);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  EXPECT_EQ(run_cli({"flim", "estimate", "--data", out("missing"), "--out", out("r1")}), 1);
  EXPECT_EQ(run_cli({"eval", "--data", ds(), "--model", out("missing.sunet"), "--out", out("r2")}), 1);
  EXPECT_EQ(run_cli({"phantom", "gen", "--n", "2", "--out", out("r3")}), 1);
}

TEST_F(CliTest, PhantomGenIsByteIdentical) {
  ASSERT_EQ(run_cli({"phantom", "gen", "--n", "6", "--seed", "7", "--marked", "2", "--out", out("g2")}), 0);
  EXPECT_EQ(dataset_files(ds()), dataset_files(out("g2")));
  ASSERT_EQ(run_cli({"phantom", "gen", "--n", "6", "--seed", "8", "--marked", "2", "--out", out("g3")}), 0);
  EXPECT_NE(dataset_files(ds()), dataset_files(out("g3")));

  const json m = read_json_file(std::filesystem::path(ds()) / cli::kRunManifestName);
  EXPECT_EQ(m["command"], "phantom gen");
  EXPECT_EQ(m["config"]["n"], 6);
  EXPECT_EQ(m["config"]["seed"], 7);
  EXPECT_EQ(m["seeds"]["phantom"], 7);
  EXPECT_EQ(m["tool_version"], kToolVersion);
  EXPECT_TRUE(m["wall_time_s"].is_number());
  EXPECT_EQ(load_manifest(ds()).train.size(), 4u);
}

TEST_F(CliTest, DataDirFromEnvironment) {
  setenv("FLIM_DATA_DIR", ds().c_str(), 1);
  const int code = run_cli({"flim", "estimate", "--modality", "t1gd", "--pca-out", "6", "--out", out("est")});
  unsetenv("FLIM_DATA_DIR");
  ASSERT_EQ(code, 0);
  const FilterBank b = load_bank(std::filesystem::path(out("est")) / "bank_t1gd.flimbank");
  EXPECT_EQ(b.size(), 6u);
  for (const auto& f : b.filters) EXPECT_NEAR(l2_norm(f.weights), 1.0, 1e-6);
  EXPECT_FALSE(std::filesystem::exists(std::filesystem::path(out("est")) / "bank_flair.flimbank"));
  EXPECT_EQ(read_json_file(std::filesystem::path(out("est")) / cli::kRunManifestName)["inputs"]["data"], ds());
}

TEST_F(CliTest, FlagsOverrideConfigOverrideDefaults) {
  const auto cfg = dir_->path() / "train_config.json";
  write_file_atomic(cfg, R"({"epochs": 3, "lr": 0.01, "widths": [4, 4, 4]})");
  ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--epochs", "1", "--data", ds(), "--out", out("prec")}), 0);
  const json m = read_json_file(std::filesystem::path(out("prec")) / cli::kRunManifestName);
  EXPECT_EQ(m["config"]["epochs"], 1);        // flag
  EXPECT_EQ(m["config"]["lr"], 0.01);         // config file
  EXPECT_EQ(m["config"]["regime"], "pbp");    // default
  EXPECT_EQ(m["config"]["widths"], json::array({4, 4, 4}));
  const std::string csv = read_file(std::filesystem::path(out("prec")) / "loss.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST_F(CliTest, FullPipelineAndCompare) {
  ASSERT_EQ(run_cli({"msflim", "grid", "--data", ds(), "--out", out("grid"), "--n1", "2", "--n2", "2,3", "--target", "4"}),
            0);
  const std::filesystem::path grid = out("grid");
  const json oracle = read_json_file(grid / "oracle_flair.json");
  EXPECT_EQ(oracle["regions"].size(), 2u);
  EXPECT_EQ(load_bank(grid / "bank_flair.flimbank").size(), 4u);

  ASSERT_EQ(run_cli({"encoder", "build", "--data", ds(), "--out", out("enc"), "--widths", "4,4,4", "--bank-flair",
                     (grid / "bank_flair.flimbank").string(), "--bank-t1gd", (grid / "bank_t1gd.flimbank").string()}),
            0);
  const EncoderModel enc = load_encoder(std::filesystem::path(out("enc")) / "encoder_t1gd.flimenc");
  EXPECT_EQ(enc.banks[0], load_bank(grid / "bank_t1gd.flimbank"));
  EXPECT_EQ(run_cli({"encoder", "build", "--data", ds(), "--out", out("enc2"), "--bank-flair",
                     (grid / "bank_flair.flimbank").string()}),
            2);

  const std::vector<std::vector<std::string>> models = {
      {"train", "--regime", "fbp", "--init", "random"},
      {"train", "--regime", "pbp", "--init", "flim"},
      {"train", "--regime", "pbp", "--init", "bank", "--bank-flair", (grid / "bank_flair.flimbank").string(),
       "--bank-t1gd", (grid / "bank_t1gd.flimbank").string()},
      {"train", "--regime", "ft", "--init", "bank", "--bank-flair", (grid / "bank_flair.flimbank").string(),
       "--bank-t1gd", (grid / "bank_t1gd.flimbank").string()}};
  const std::vector<std::string> labels = {"FBp", "FLIM+PBp", "MS-FLIM+PBp", "MS-FLIM+FT"};
  std::vector<std::string> cmp = {"compare", "--out", out("cmp")};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string mdir = out("m" + std::to_string(i));
    ASSERT_EQ(run_cli(cat(cat(models[i], kTiny), {"--data", ds(), "--out", mdir})), 0) << labels[i];
    ASSERT_EQ(run_cli({"eval", "--data", ds(), "--model", mdir + "/model.sunet", "--out", mdir}), 0);
    const DiceReport rep = parse_report_csv(read_file(mdir + "/report.csv"));
    EXPECT_EQ(rep.cases.size(), 1u);
    cmp.push_back("--report");
    cmp.push_back(labels[i] + "=" + mdir + "/report.csv");
  }
  ASSERT_EQ(run_cli(cmp), 0);
  const std::string table = read_file(out("cmp") + "/comparison.md");
  std::vector<std::string> lines;
  std::istringstream in(table);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 6u);  // header, separator, four models
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_NE(lines[i + 2].find(labels[i]), std::string::npos);
    EXPECT_EQ(std::count(lines[i + 2].begin(), lines[i + 2].end(), '('), 3);
  }
}

TEST_F(CliTest, IdenticalRunsGiveIdenticalOutputs) {
  for (const char* name : {"d1", "d2"}) {
    ASSERT_EQ(run_cli(cat(cat({"train", "--regime", "pbp", "--init", "flim"}, kTiny), {"--data", ds(), "--out", out(name)})),
              0);
    ASSERT_EQ(run_cli({"eval", "--data", ds(), "--model", out(name) + "/model.sunet", "--out", out(name)}), 0);
  }
  for (const char* f : {"model.sunet", "loss.csv", "report.csv", "encoder_flair.flimenc"})
    EXPECT_EQ(read_file(out("d1") + "/" + f), read_file(out("d2") + "/" + f)) << f;
}

TEST_F(CliTest, ServeAnswersAndStops) {
  const std::string sdir = out("serve");
  int code = -1;
  std::thread t([&] { code = run_cli({"serve", "--data", ds(), "--out", sdir, "--port", "0"}); });
  const auto manifest = std::filesystem::path(sdir) / cli::kRunManifestName;
  for (int i = 0; i < 200 && !std::filesystem::exists(manifest); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  ASSERT_TRUE(std::filesystem::exists(manifest));
  const int port = read_json_file(manifest)["outputs"]["port"].get<int>();
  httplib::Client c("127.0.0.1", port);
  auto r = c.Post("/api/sessions", R"({"dataset":""})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  EXPECT_EQ(c.Get("/api/sessions/none")->status, 404);
  cli::g_stop = true;
  t.join();
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(sdir) / "sessions" / "s1" / "session.json"));
}
