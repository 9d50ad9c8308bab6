#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "eldm/cli/pipeline.hpp"

using namespace eldm;
using namespace eldm::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() / ("eldm_pipeline_" + tag);
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

private:
  fs::path path_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Two-manifold data: rows alternate between two noisy lines in 4-D.
std::string two_regime_csv(int n) {
  std::ostringstream out;
  out << "a,b,c,d\n";
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double wobble = 0.01 * std::sin(37.0 * i);
    if (i % 2 == 0) out << t << ',' << 2.0 * t + wobble << ',' << 1.0 - t << ',' << 0.5 + wobble << '\n';
    else out << 3.0 + t << ',' << -t << ',' << 2.0 + wobble << ',' << 4.0 * t << '\n';
  }
  return out.str();
}

std::string pipeline_config(const fs::path& input, const fs::path& out) {
  return R"({
    "input": {"path": ")" + input.string() + R"("},
    "preprocessing": {"scaling": "range"},
    "output_dir": ")" + out.string() + R"(",
    "seed": 11,
    "report_formats": ["csv", "json"],
    "tasks": [
      {"type": "pca", "q": 2},
      {"type": "vqpca", "k": 2, "q": 1},
      {"type": "classify", "model": "vqpca.eldm"},
      {"type": "nmf", "q": 2, "max_iter": 200, "subtract_minimum": true},
      {"type": "rotate", "q": 2},
      {"type": "gpr", "q": 2, "targets": ["d"], "max_train": 60, "search_points": 40}
    ]
  })";
}

int run_binary(const std::string& args) {
  const char* bin = std::getenv("ELDM_BIN");
  if (bin == nullptr) return -1;
  const std::string cmd = std::string(bin) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json manifest_without_timings(const fs::path& p) {
  json m = json::parse(read_text(p));
  m.erase("timings_seconds");
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

TEST(Config, MinimalConfigFillsDefaults) {
  const auto cfg = parse_config(R"({"input": {"path": "x.csv"}, "tasks": [{"type": "vqpca"}]})");
  ASSERT_TRUE(cfg.input);
  EXPECT_EQ(cfg.input->path, "x.csv");
  EXPECT_EQ(cfg.input->delimiter, ',');
  EXPECT_EQ(cfg.scaling, Scaling::autoscale);
  EXPECT_TRUE(cfg.centered);
  EXPECT_EQ(cfg.output_dir, "eldm_out");
  ASSERT_EQ(cfg.tasks.size(), 1u);
  const auto& p = cfg.tasks[0].params;
  EXPECT_EQ(p["k"], 2);
  EXPECT_EQ(p["q"], 2);
  EXPECT_EQ(p["init"], "random");
  EXPECT_EQ(cfg.provenance["tasks[0].k"], "default");
  EXPECT_EQ(cfg.provenance["tasks[0].type"], "config");
  EXPECT_EQ(cfg.resolved["preprocessing"]["scaling"], "auto");
}

TEST(Config, CommentsAndAliases) {
  const auto cfg = parse_config(R"({
    // a comment
    "tasks": [{"type": "varimax"}, {"type": "autoencoder"}, {"type": "generate-synthetic"}]
  })");
  EXPECT_EQ(cfg.tasks[0].type, "rotate");
  EXPECT_EQ(cfg.tasks[1].type, "ae");
  EXPECT_EQ(cfg.tasks[2].type, "synth");
}

TEST(Config, UnknownKeyNamesThePath) {
  try {
    parse_config(R"({"preprocessing": {"sclaing": "auto"}, "tasks": [{"type": "pca"}]})");
    FAIL() << "accepted a misspelled key";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("preprocessing.sclaing"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"({"tasks": [{"type": "pca", "qq": 2}]})"), ConfigError);
}

TEST(Config, RangeAndTypeErrorsNameThePath) {
  try {
    parse_config(R"({"tasks": [{"type": "vqpca", "k": 0}]})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("tasks[0].k"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"({"tasks": [{"type": "pca", "q": "two"}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"tasks": [{"type": "fpca", "z_column": "Z"}]})"), ConfigError);  // z_st missing
  EXPECT_THROW(parse_config(R"({"tasks": [{"type": "nope"}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"tasks": []})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"tasks": [{"type": "pca"}, {"type": "pca", "name": "pca0"}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"report_formats": ["json"], "tasks": [{"type": "pca"}]})"), ConfigError);
  EXPECT_THROW(parse_config("{ not json"), ConfigError);
}

TEST(Config, FlagsOverrideAndAreRecorded) {
  Overrides o;
  o.subcommand = "vqpca";
  o.k = 5;
  o.q = 3;
  o.seed = 99;
  o.scaling = "pareto";
  o.sets = {"tasks.0.init=kmeans", "tasks.0.tol_error=1e-3"};
  const auto cfg = parse_config(
      R"({"input": {"path": "x.csv"}, "tasks": [{"type": "pca", "q": 1}, {"type": "vqpca", "k": 2}]})", o);
  ASSERT_EQ(cfg.tasks.size(), 1u);
  const auto& p = cfg.tasks[0].params;
  EXPECT_EQ(p["k"], 5);
  EXPECT_EQ(p["q"], 3);
  EXPECT_EQ(p["init"], "kmeans");
  EXPECT_DOUBLE_EQ(p["tol_error"].get<double>(), 1e-3);
  EXPECT_EQ(p["seed"], 99);  // task seed defaults to the global one
  EXPECT_EQ(cfg.scaling, Scaling::pareto);
  EXPECT_EQ(cfg.provenance["tasks[0].k"], "flag");
  EXPECT_EQ(cfg.provenance["tasks[0].init"], "flag");
  EXPECT_EQ(cfg.provenance["tasks[0].max_iter"], "default");
  EXPECT_EQ(cfg.provenance["preprocessing.scaling"], "flag");
}

TEST(Config, SubcommandWithoutConfigCreatesTask) {
  Overrides o;
  o.subcommand = "pca";
  o.input = "data.csv";
  o.q = 4;
  const auto cfg = parse_config("", o);
  ASSERT_EQ(cfg.tasks.size(), 1u);
  EXPECT_EQ(cfg.tasks[0].type, "pca");
  EXPECT_EQ(cfg.tasks[0].params["q"], 4);
}

// ---------------------------------------------------------------------------
// end to end

TEST(Pipeline, WritesReportsWithExpectedShapes) {
  TempDir dir("shapes");
  write_text(dir / "data.csv", two_regime_csv(120));
  const auto cfg = parse_config(pipeline_config(dir / "data.csv", dir / "out"));
  const auto result = run_pipeline(cfg);
  for (const auto& t : result.tasks) EXPECT_EQ(t.status, "ok") << t.name;

  // weights: header plus one row per variable, variable + q columns
  const auto weights = load_state_matrix(read_text(dir / "out/pca_weights.csv"), {}, {',', std::string("variable")});
  EXPECT_EQ(weights.rows(), 4);
  EXPECT_EQ(weights.cols(), 2);
  EXPECT_EQ(weights.row_ids(), (std::vector<std::string>{"a", "b", "c", "d"}));

  const auto labels = load_state_matrix(read_text(dir / "out/vqpca_labels.csv"), {}, {',', std::string("row")});
  EXPECT_EQ(labels.rows(), 120);
  const auto manifest = json::parse(read_text(dir / "out/run_manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["input"]["rows"], 120);
  EXPECT_EQ(manifest["input"]["sha256"], file_sha256(dir / "data.csv"));
  EXPECT_EQ(manifest["tasks"].size(), 6u);
  EXPECT_TRUE(fs::exists(dir / "out/gpr_summary.json"));
  EXPECT_FALSE(fs::exists(dir / "out/FAILED"));
}

TEST(Pipeline, ClassifyMatchesLibraryOnArchivedModel) {
  TempDir dir("classify");
  write_text(dir / "data.csv", two_regime_csv(80));
  run_pipeline(parse_config(pipeline_config(dir / "data.csv", dir / "out")));

  const auto archive = load_model(dir / "out/vqpca.eldm");
  const auto data = load_state_matrix(read_text(dir / "data.csv"), {});
  const Labels expected = classify_rows(data.values(), archive.get<LocalPartition>(), archive.get<Preprocessor>());
  const auto got = load_state_matrix(read_text(dir / "out/classify_labels.csv"), {}, {',', std::string("row")});
  ASSERT_EQ(got.rows(), static_cast<Index>(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(got.values()(static_cast<Index>(i), 0), expected[i]);
  // and the archived labels are what vqpca reported
  const auto vq = load_state_matrix(read_text(dir / "out/vqpca_labels.csv"), {}, {',', std::string("row")});
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(vq.values()(static_cast<Index>(i), 0), archive.get<LocalPartition>().labels[i]);
  }
}

TEST(Pipeline, RepeatedRunsAreByteIdentical) {
  TempDir dir("determinism");
  write_text(dir / "data.csv", two_regime_csv(100));
  run_pipeline(parse_config(pipeline_config(dir / "data.csv", dir / "a")));
  run_pipeline(parse_config(pipeline_config(dir / "data.csv", dir / "b")));
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename().string();
    ASSERT_TRUE(fs::exists(dir / "b" / name)) << name;
    if (name == "run_manifest.json") continue;
    EXPECT_EQ(read_text(entry.path()), read_text(dir / "b" / name)) << name;
    ++compared;
  }
  EXPECT_GT(compared, 15u);
  json ma = manifest_without_timings(dir / "a/run_manifest.json");
  json mb = manifest_without_timings(dir / "b/run_manifest.json");
  ma["config"].erase("output_dir");
  mb["config"].erase("output_dir");
  EXPECT_EQ(ma, mb);
}

TEST(Pipeline, SynthFeedsLaterTasks) {
  TempDir dir("synth");
  const auto cfg = parse_config(R"({"output_dir": ")" + (dir / "out").string() + R"(", "tasks": [
      {"type": "synth", "n_points": 300, "seed": 4},
      {"type": "fpca", "k": 2, "q": 1, "z_st": 0.42, "fuel": ["H2", "CO"]}]})");
  run_pipeline(cfg);
  const auto truth = load_state_matrix(read_text(dir / "out/synth_truth.csv"), {}, {',', std::string("row")});
  const auto labels = load_state_matrix(read_text(dir / "out/fpca_labels.csv"), {}, {',', std::string("row")});
  ASSERT_EQ(truth.rows(), labels.rows());
  // two bins: lean (label 0) and rich (label 1) split at the stoichiometric value
  for (Index i = 0; i < truth.rows(); ++i) {
    const double z = truth.values()(i, 0);
    if (std::abs(z - 0.42) < 1e-9) continue;
    EXPECT_EQ(labels.values()(i, 0), z < 0.42 ? 0.0 : 1.0) << "z=" << z;
  }
}

TEST(Pipeline, FailureLeavesMarkerAndManifest) {
  TempDir dir("failure");
  write_text(dir / "data.csv", "a,b\n1,2\n1,2\n1,2\n");
  const auto cfg = parse_config(R"({"input": {"path": ")" + (dir / "data.csv").string() + R"("},
      "output_dir": ")" + (dir / "out").string() + R"(", "tasks": [{"type": "pca", "q": 1}]})");
  EXPECT_THROW(run_pipeline(cfg), NumericError);
  const auto marker = read_text(dir / "out/FAILED");
  EXPECT_NE(marker.find("task 0 (pca)"), std::string::npos) << marker;
  const auto manifest = json::parse(read_text(dir / "out/run_manifest.json"));
  EXPECT_EQ(manifest["status"], "failed");
  EXPECT_EQ(manifest["tasks"][0]["status"], "failed");
}

TEST(Pipeline, MissingInputIsDataError) {
  TempDir dir("missing");
  const auto cfg = parse_config(R"({"input": {"path": ")" + (dir / "nope.csv").string() + R"("},
      "output_dir": ")" + (dir / "out").string() + R"(", "tasks": [{"type": "pca"}]})");
  EXPECT_THROW(run_pipeline(cfg), DataError);
  EXPECT_NE(read_text(dir / "out/FAILED").find("input"), std::string::npos);
}

// ---------------------------------------------------------------------------
// binary

TEST(Cli, ExitCodesFollowErrorKinds) {
  if (std::getenv("ELDM_BIN") == nullptr) GTEST_SKIP() << "ELDM_BIN not set";
  TempDir dir("exit");
  write_text(dir / "good.csv", two_regime_csv(60));
  write_text(dir / "bad.csv", "a,b\n1,2\n3,oops\n");
  write_text(dir / "const.csv", "a,b\n1,2\n1,2\n1,2\n");
  write_text(dir / "typo.json", R"({"preprocessing": {"sclaing": "auto"}, "tasks": [{"type": "pca"}]})");
  const std::string out = " --output " + (dir / "out").string();

  EXPECT_EQ(run_binary("pca --input " + (dir / "good.csv").string() + out), 0);
  EXPECT_TRUE(fs::exists(dir / "out/pca_weights.csv"));
  EXPECT_EQ(run_binary("run --config " + (dir / "typo.json").string() + out), 1);
  EXPECT_EQ(run_binary("vqpca --k 0 --input " + (dir / "good.csv").string() + out), 1);
  EXPECT_EQ(run_binary("pca --no-such-flag"), 1);
  EXPECT_EQ(run_binary("pca --input " + (dir / "bad.csv").string() + out), 2);
  EXPECT_EQ(run_binary("pca --q 1 --input " + (dir / "const.csv").string() + out), 3);
  EXPECT_EQ(run_binary("--version"), 0);
}
