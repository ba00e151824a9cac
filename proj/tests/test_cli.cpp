#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "rp/dataset.hpp"
#include "rp/eval.hpp"
#include "test_support.hpp"

using namespace rp;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

/// Runs the CLI with stderr folded into the captured output.
Run rp_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + std::string(RP_CLI_PATH) + "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

class Workspace {
 public:
  Workspace() : dir_("cli") {
    data_ = dir_.file("ratings.tsv");
    write_ratings(data_, test::structured_dataset(40, 30, 0.5, 11));
  }
  const std::string& data() const { return data_; }
  std::string file(const std::string& name) const { return dir_.file(name); }

 private:
  test::TempDir dir_;
  std::string data_;
};

const char* kQuickEval = " --factors 8 --epochs 5 --nmf-factors 4 --nmf-epochs 5 --gbt-trees 20 --gbt-depth 3 "
                         "--gbt-min-leaf 10 --quiet";

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(rp_cli("").code == 1);
  CHECK(rp_cli("frobnicate").code == 1);
  const Run r = rp_cli("stats --no-such-flag x");
  CHECK(r.code == 1);
  CHECK(r.out.find("--no-such-flag") != std::string::npos);
  CHECK(rp_cli("--help").code == 0);
  CHECK(rp_cli("stats").code == 1);
  CHECK(rp_cli("stats --counts 10,10,5 --convention diagonal").code == 1);
}

TEST_CASE("stats prints labelled key=value lines") {
  Workspace w;
  const Run r = rp_cli("stats " + q(w.data()));
  CHECK(r.code == 0);
  CHECK(r.out.find("n_users=40\n") != std::string::npos);
  CHECK(r.out.find("n_items=30\n") != std::string::npos);
  CHECK(r.out.find("density_full=") != std::string::npos);
  CHECK(r.out.find("convention=full\n") != std::string::npos);

  const Run c = rp_cli("stats --counts 943,1682,100000 --convention half");
  CHECK(c.code == 0);
  CHECK(c.out.find("cpm_elements_half=793063\n") != std::string::npos);
  CHECK(c.out.find("density_half=0.126") != std::string::npos);
  CHECK(c.out.find("convention=half\n") != std::string::npos);
}

TEST_CASE("data errors exit 2") {
  Workspace w;
  test::write_file(w.file("bad.tsv"), "a\tx\t9\n");
  const Run r = rp_cli("stats " + q(w.file("bad.tsv")));
  CHECK(r.code == 2);
  CHECK(r.out.find("rating out of range") != std::string::npos);
  CHECK(rp_cli("stats " + q(w.file("missing.tsv"))).code == 2);
  test::write_file(w.file("junk.bin"), "RPCXjunk");
  CHECK(rp_cli("rp-extract --cpm " + q(w.file("junk.bin")) + " --data " + q(w.data()) + " --out " +
               q(w.file("f.csv")))
            .code == 2);
}

TEST_CASE("CPM budget refusal exits 3 with the projected size") {
  Workspace w;
  const Run r = rp_cli("cpm --budget-bytes 1000 --data " + q(w.data()) + " --algo baseline --out " + q(w.file("c.bin")));
  CHECK(r.code == 3);
  CHECK(r.out.find("projected size 4.8e3 bytes exceeds budget") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(w.file("c.bin")));
  CHECK(rp_cli("--budget-bytes 1000 evaluate --data " + q(w.data()) + " --algos baseline --out " +
               q(w.file("rep")) + kQuickEval)
            .code == 3);
}

TEST_CASE("staged pipeline: folds, train, cpm, rp-extract, cascade") {
  Workspace w;
  REQUIRE(rp_cli("folds " + q(w.data()) + " --out " + q(w.file("folds.txt"))).code == 0);
  CHECK(std::filesystem::exists(w.file("folds.txt.manifest.json")));
  REQUIRE(rp_cli("train " + q(w.data()) + " --algo svd --factors 8 --folds " + q(w.file("folds.txt")) +
                 " --fit-folds 0-4 --out " + q(w.file("svd.bin")))
              .code == 0);
  REQUIRE(rp_cli("cpm --model " + q(w.file("svd.bin")) + " --out " + q(w.file("svd.cpm"))).code == 0);
  REQUIRE(rp_cli("cpm --data " + q(w.data()) + " --algo baseline --folds " + q(w.file("folds.txt")) + " --out " +
                 q(w.file("base.cpm")))
              .code == 0);
  REQUIRE(rp_cli("rp-extract --cpm " + q(w.file("svd.cpm")) + " --data " + q(w.data()) + " --folds " +
                 q(w.file("folds.txt")) + " --fold-set 0-4 --out " + q(w.file("train.csv")))
              .code == 0);
  REQUIRE(rp_cli("rp-extract --cpm " + q(w.file("svd.cpm")) + " --data " + q(w.data()) + " --folds " +
                 q(w.file("folds.txt")) + " --fold-set 5 --out " + q(w.file("hold.csv")))
              .code == 0);
  const FeatureTable train = read_features(w.file("train.csv"));
  const FeatureTable hold = read_features(w.file("hold.csv"));
  const FoldAssignment folds = read_folds(w.file("folds.txt"));
  CHECK(train.values.rows() == folds.indices_in(std::vector<int>{0, 1, 2, 3, 4}).size());
  CHECK(hold.values.rows() == folds.indices_in(kHoldoutFold).size());
  CHECK(train.columns.back() == "score_svd");

  REQUIRE(rp_cli("rp-extract --cpm " + q(w.file("svd.cpm")) + " " + q(w.file("base.cpm")) + " --data " + q(w.data()) +
                 " --out " + q(w.file("stacked.csv")))
              .code == 0);
  CHECK(read_features(w.file("stacked.csv")).values.cols() == 28);

  REQUIRE(rp_cli("cascade --features " + q(w.file("train.csv")) + " --labels " + q(w.data()) +
                 " --gbt-trees 20 --out " + q(w.file("gbt.bin")))
              .code == 0);
  REQUIRE(rp_cli("cascade --features " + q(w.file("hold.csv")) + " --model " + q(w.file("gbt.bin")) +
                 " --clamp-output --out " + q(w.file("pred.csv")))
              .code == 0);
  const std::string pred = test::read_file(w.file("pred.csv"));
  CHECK(pred.rfind("user,item,prediction\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(pred.begin(), pred.end(), '\n')) == hold.values.rows() + 1);
  CHECK(rp_cli("cascade --features " + q(w.file("hold.csv")) + " --out " + q(w.file("x"))).code == 1);

  const auto manifest = nlohmann::json::parse(test::read_file(w.file("gbt.bin.manifest.json")));
  CHECK(manifest["command"] == "cascade");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["inputs"].size() == 2);
  CHECK(manifest["inputs"][0]["sha256"].get<std::string>().size() == 64);
  CHECK(manifest.contains("tool_version"));
  CHECK(manifest["config"]["cascade"]["n_trees"] == 20);
}

TEST_CASE("densify writes the core and a manifest") {
  const std::string fixture = std::string(RP_FIXTURE_DIR) + "/kcore_synth.tsv";
  test::TempDir dir("densify");
  const Run r = rp_cli("densify " + q(fixture) + " --target 0.2 --out " + q(dir.file("core.tsv")));
  CHECK(r.code == 0);
  CHECK(r.out.find("k=7\n") != std::string::npos);
  CHECK(ingest(dir.file("core.tsv")).n_ratings() == 1010);
  const auto manifest = nlohmann::json::parse(test::read_file(dir.file("core.tsv.manifest.json")));
  CHECK(manifest["config"]["k"] == 7);
  CHECK(rp_cli("densify " + q(fixture) + " --target 0.99").code == 2);
}

TEST_CASE("evaluate is byte-reproducible and report re-renders") {
  Workspace w;
  const std::string base = "evaluate --data " + q(w.data()) + " --algos baseline,knn_basic --dataset-id toy" + kQuickEval;
  REQUIRE(rp_cli(base + " --out " + q(w.file("a"))).code == 0);
  REQUIRE(rp_cli(base + " --out " + q(w.file("b"))).code == 0);
  for (const char* f : {"results.csv", "per_fold.csv", "grid.md", "grid.html", "summary.txt", "predictions.csv",
                        "audit.csv"}) {
    CAPTURE(f);
    const std::string a = test::read_file(w.file(std::string("a/") + f));
    CHECK_FALSE(a.empty());
    CHECK(a == test::read_file(w.file(std::string("b/") + f)));
  }
  const auto manifest = nlohmann::json::parse(test::read_file(w.file("a/manifest.json")));
  CHECK(manifest["config"]["feature_source"] == "cross_fit");
  CHECK(manifest["config"]["algorithms"] == "baseline,knn_basic");

  REQUIRE(rp_cli("report --results " + q(w.file("a/results.csv")) + " --out " + q(w.file("r"))).code == 0);
  CHECK(test::read_file(w.file("r/grid.md")) == test::read_file(w.file("a/grid.md")));
  CHECK(rp_cli(base + " --seed 8 --out " + q(w.file("c"))).code == 0);
  CHECK(test::read_file(w.file("c/results.csv")) != test::read_file(w.file("a/results.csv")));
}

TEST_CASE("flags beat the config file, which beats the environment") {
  Workspace w;
  test::write_file(w.file("rp.ini"), "seed=11\n");
  const auto seed_of = [&](const std::string& args, const std::string& env) {
    const std::string out = w.file("f" + std::to_string(std::rand()) + ".txt");
    REQUIRE(rp_cli(args + " folds " + q(w.data()) + " --out " + q(out), env).code == 0);
    return nlohmann::json::parse(test::read_file(out + ".manifest.json"))["seed"].get<int>();
  };
  CHECK(seed_of("", "") == 7);
  CHECK(seed_of("", "RP_SEED=5") == 5);
  CHECK(seed_of("--config " + q(w.file("rp.ini")), "RP_SEED=5") == 11);
  CHECK(seed_of("--config " + q(w.file("rp.ini")) + " --seed 12", "RP_SEED=5") == 12);
}
