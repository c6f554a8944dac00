#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "kinegen/config.hpp"
#include "kinegen/csv.hpp"
#include "kinegen/types.hpp"

namespace fs = std::filesystem;
using namespace kinegen;

namespace {

std::string cli() {
  const char* path = std::getenv("KINEGEN_CLI");
  REQUIRE(path != nullptr);
  return path;
}

// Runs the binary through the shell; KINEGEN_SEED is scrubbed unless the
// caller injects its own environment prefix.
int run(const std::string& args,
        const std::string& env = "env -u KINEGEN_SEED") {
  const std::string cmd = env + " " + cli() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path root = fs::temp_directory_path() / "kinegen-cli" / name;
  fs::remove_all(root);
  fs::create_directories(root);
  return root;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& path, const std::string& content) {
  write_file_atomic(path, content);
}

// tiny-scale config shared by the functional tests
std::string tiny_config() {
  return R"([run]
seed = 7

[surrogate]
count_w1_nc = 20
count_w2_nc = 20
count_w1_c = 20
count_w2_c = 20

[timegan]
hidden = 4
layers = 1
batch_size = 8
epochs_embedding = 8
epochs_supervised = 8
epochs_joint = 8

[classifier]
hidden = 4
fc_hidden = 4
folds = 2
epochs = 2
patience = 2

[analysis]
perplexity = 8
tsne_iterations = 30
tsne_max_points = 40
)";
}

}  // namespace

TEST_CASE("config parses sections, comments and whitespace") {
  const Config cfg = Config::parse(
      "# leading comment\n"
      "top = 1\n"
      "[alpha]\n"
      "  key =  spaced value \n"
      "; another comment\n"
      "flag = true\n"
      "\n"
      "[beta]\n"
      "count = 42\n"
      "rate = 2.5\n");
  CHECK(cfg.get("", "top", "") == "1");
  CHECK(cfg.get("alpha", "key", "") == "spaced value");
  CHECK(cfg.get_bool("alpha", "flag", false));
  CHECK(cfg.get_int("beta", "count", 0) == 42);
  CHECK(cfg.get_double("beta", "rate", 0.0) == 2.5);
  CHECK(cfg.get("beta", "absent", "fallback") == "fallback");
  CHECK_FALSE(cfg.has("gamma", "anything"));
}

TEST_CASE("config rejects malformed input with line numbers") {
  CHECK_THROWS_AS(Config::parse("[unclosed\n"), validation_error);
  CHECK_THROWS_AS(Config::parse("no equals sign\n"), validation_error);
  CHECK_THROWS_AS(Config::parse("= value without key\n"), validation_error);
  try {
    Config::parse("ok = 1\nbroken line\n");
    FAIL("expected validation_error");
  } catch (const validation_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  const Config cfg = Config::parse("[a]\nx = notanumber\n");
  CHECK_THROWS_AS(cfg.get_int("a", "x", 0), validation_error);
  CHECK_THROWS_AS(cfg.get_double("a", "x", 0.0), validation_error);
  CHECK_THROWS_AS(cfg.get_bool("a", "x", false), validation_error);
}

TEST_CASE("config hash ignores comments, spacing and key order") {
  const Config a = Config::parse("[s]\nx = 1\ny = 2\n");
  const Config b = Config::parse("# comment\n[s]\n\ny=2\n  x  =  1\n");
  const Config c = Config::parse("[s]\nx = 1\ny = 3\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("manifest json carries the determinism fields") {
  const auto j = manifest_json("train", {"in.csv"}, 0xabcdULL, 9, {"note"});
  CHECK(j.at("command") == "train");
  CHECK(j.at("inputs") == std::vector<std::string>{"in.csv"});
  CHECK(j.at("config_hash") == "000000000000abcd");
  CHECK(j.at("seed") == 9);
  CHECK(j.at("timestamp").is_null());
  CHECK(j.at("notes") == std::vector<std::string>{"note"});
}

TEST_CASE("cli exit codes follow the error taxonomy") {
  const fs::path ws = fresh_dir("exit-codes");
  CHECK(run("--version") == 0);
  CHECK(run("definitely-not-a-command") == 2);
  CHECK(run("train -w " + q(ws) + " -a archives/missing.csv --class W1-NC") ==
        4);
  CHECK(run("train -w " + q(ws) + " -a archives/missing.csv --class bogus") ==
        2);
  CHECK(run("surrogate -w " + q(ws), "env KINEGEN_SEED=notanumber") == 2);

  // archive with only one class: training any other class is a validation
  // failure, not an I/O one
  REQUIRE(run("surrogate -w " + q(ws) + " --seed 1 -o archives/all.csv") == 0);
  const std::string all = read_file(ws / "archives" / "all.csv");
  std::string only;
  std::istringstream lines(all);
  std::string line;
  while (std::getline(lines, line)) {
    if (only.empty() || line.find("W1-NC") != std::string::npos) {
      only += line + "\n";
    }
  }
  write_text(ws / "archives" / "only.csv", only);
  CHECK(run("train -w " + q(ws) + " -a archives/only.csv --class W2-C") == 2);
}

TEST_CASE("seed precedence: flag over environment over config") {
  const fs::path ws = fresh_dir("seed-precedence");
  const fs::path cfg = ws / "cfg.ini";
  write_text(cfg, "[run]\nseed = 11\n[surrogate]\ncount_w1_nc = 5\n"
                  "count_w2_nc = 5\ncount_w1_c = 5\ncount_w2_c = 5\n");
  const std::string base = "surrogate -w " + q(ws) + " -c " + q(cfg);

  REQUIRE(run(base + " -o archives/flag.csv --seed 11") == 0);
  REQUIRE(run(base + " -o archives/env.csv", "env KINEGEN_SEED=11") == 0);
  REQUIRE(run(base + " -o archives/cfg.csv") == 0);
  REQUIRE(run(base + " -o archives/flag-wins.csv --seed 11",
              "env KINEGEN_SEED=99") == 0);
  REQUIRE(run(base + " -o archives/other.csv --seed 12") == 0);

  const std::string flag = read_file(ws / "archives" / "flag.csv");
  CHECK(flag == read_file(ws / "archives" / "env.csv"));
  CHECK(flag == read_file(ws / "archives" / "cfg.csv"));
  CHECK(flag == read_file(ws / "archives" / "flag-wins.csv"));
  CHECK(flag != read_file(ws / "archives" / "other.csv"));
}

TEST_CASE("ingest segments labeled recordings into an archive") {
  const fs::path root = fresh_dir("ingest");
  const fs::path rec = root / "recordings";
  fs::create_directories(rec);

  // velocity recording: 12 rest samples, a 23-sample bell (peak exactly
  // 1.0 at the center grid point), 12 rest samples
  std::string v_csv = "t,vx,vy,vz\n";
  int row = 0;
  const auto emit_v = [&](double vx) {
    v_csv += format_double(row / 22.0) + "," + format_double(vx) + ",0,0\n";
    ++row;
  };
  for (int i = 0; i < 12; ++i) emit_v(0.0);
  for (int i = 0; i <= 22; ++i) {
    const double tau = i / 22.0;
    emit_v(4.0 * tau * (1.0 - tau));
  }
  for (int i = 0; i < 12; ++i) emit_v(0.0);
  write_text(rec / "recA.csv", v_csv);

  // position recording: rest, a 1-second smoothstep reach of 0.3 m, rest
  std::string p_csv = "t,x,y,z\n";
  row = 0;
  const auto emit_p = [&](double x) {
    p_csv += format_double(row / 22.0) + "," + format_double(x) + ",0,0\n";
    ++row;
  };
  for (int i = 0; i < 12; ++i) emit_p(0.0);
  for (int i = 0; i <= 22; ++i) {
    const double tau = i / 22.0;
    emit_p(0.3 * tau * tau * (3.0 - 2.0 * tau));
  }
  for (int i = 0; i < 12; ++i) emit_p(0.3);
  write_text(rec / "recB.csv", p_csv);

  write_text(rec / "labels.csv", "recording_id,class\nrecA,W1-NC\nrecB,W2-C\n");

  REQUIRE(run("ingest -w " + q(root) + " -r recordings") == 0);
  const TrialSet set = read_trialset_csv(root / "archives" / "real.csv");
  REQUIRE(set.trials.size() == 2);
  CHECK(set.trials[0].trial_id == "recA-000");
  CHECK(set.trials[0].label == ClassLabel::parse("W1-NC"));
  // the bell survives whole: boundary zeros are cut, interior intact
  CHECK(set.trials[0].v.size() == 21);
  CHECK(*std::max_element(set.trials[0].v.begin(),
                          set.trials[0].v.end()) == 1.0);
  CHECK(set.trials[1].trial_id == "recB-000");
  CHECK(set.trials[1].label == ClassLabel::parse("W2-C"));
  const double peak = *std::max_element(set.trials[1].v.begin(),
                                        set.trials[1].v.end());
  CHECK(peak > 0.4);
  CHECK(peak < 0.5);
  CHECK(fs::exists(root / "archives" / "real.manifest.json"));

  // a recording with no label row is a validation failure
  write_text(rec / "recC.csv", v_csv);
  CHECK(run("ingest -w " + q(root) + " -r recordings") == 2);
}

TEST_CASE("pipeline reruns are byte-identical across workspaces") {
  const fs::path root = fresh_dir("determinism");
  const fs::path cfg = root / "cfg.ini";
  write_text(cfg, tiny_config());

  for (const std::string ws : {"a", "b"}) {
    const std::string w = " -w " + q(root / ws) + " -c " + q(cfg);
    REQUIRE(run("surrogate" + w) == 0);
    REQUIRE(run("train" + w + " -a archives/surrogate.csv --class W1-NC") ==
            0);
    REQUIRE(run("generate" + w + " --class W1-NC -n 10") == 0);
  }
  for (const std::string rel :
       {"archives/surrogate.csv", "archives/surrogate.manifest.json",
        "models/W1-NC/model.json", "models/W1-NC/history.csv",
        "models/W1-NC/manifest.json", "archives/synthetic-W1-NC.csv",
        "archives/synthetic-W1-NC.manifest.json"}) {
    INFO(rel);
    CHECK(read_file(root / "a" / rel) == read_file(root / "b" / rel));
  }
}

TEST_CASE("eval and analyze emit the full report layout") {
  const fs::path ws = fresh_dir("reports");
  const fs::path cfg = ws / "cfg.ini";
  write_text(cfg, tiny_config());
  const std::string w = " -w " + q(ws) + " -c " + q(cfg);

  REQUIRE(run("surrogate" + w) == 0);
  // second surrogate with a different seed stands in for synthetic data;
  // ids are re-prefixed so the two populations stay disjoint
  REQUIRE(run("surrogate" + w + " --seed 99 -o archives/stand-in.csv") == 0);
  std::string synth = read_file(ws / "archives" / "stand-in.csv");
  std::size_t at = 0;
  while ((at = synth.find("sur-", at)) != std::string::npos) {
    synth.replace(at, 4, "syn-");
    at += 4;
  }
  write_text(ws / "archives" / "synthetic.csv", synth);

  REQUIRE(run("eval" + w + " --real archives/surrogate.csv"
              " --synth archives/synthetic.csv") == 0);
  const auto eval_doc =
      nlohmann::json::parse(read_file(ws / "reports" / "eval.json"));
  CHECK(eval_doc.at("reports").size() == 12);
  for (const auto& r : eval_doc.at("reports")) {
    CHECK(r.at("per_fold").size() == 2);  // folds pinned by the config
    const double acc = r.at("test_acc_mean").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  const std::string table = read_file(ws / "reports" / "eval.txt");
  CHECK(table.find("TRTS") != std::string::npos);
  CHECK(table.find("TSTR") != std::string::npos);
  CHECK(table.find("care/all") != std::string::npos);
  CHECK(table.find("spread of the fold models") != std::string::npos);

  REQUIRE(run("analyze" + w + " --real archives/surrogate.csv"
              " --synth archives/synthetic.csv") == 0);
  for (const std::string rel :
       {"reports/outliers.json", "reports/profiles.csv",
        "reports/projection_pca.csv", "reports/projection_pca.meta.json",
        "reports/projection_tsne.csv", "reports/projection_tsne.meta.json",
        "reports/histograms.csv", "reports/distances.json",
        "reports/analyze.manifest.json", "plots/profiles.svg",
        "plots/projection_pca.svg", "plots/projection_tsne.svg",
        "plots/hist_md.svg", "plots/hist_pa.svg", "plots/hist_ad_md.svg"}) {
    INFO(rel);
    CHECK(fs::exists(ws / rel));
  }

  // 80 real + 80 synthetic rows, one header line
  const std::string pca = read_file(ws / "reports" / "projection_pca.csv");
  CHECK(std::count(pca.begin(), pca.end(), '\n') == 161);
  // the t-SNE population was capped at 40 by the config
  const std::string tsne = read_file(ws / "reports" / "projection_tsne.csv");
  CHECK(std::count(tsne.begin(), tsne.end(), '\n') == 41);
  const auto manifest = nlohmann::json::parse(
      read_file(ws / "reports" / "analyze.manifest.json"));
  bool noted = false;
  for (const auto& n : manifest.at("notes")) {
    if (n.get<std::string>().find("subsample") != std::string::npos) {
      noted = true;
    }
  }
  CHECK(noted);

  const auto distances =
      nlohmann::json::parse(read_file(ws / "reports" / "distances.json"));
  CHECK(distances.at("wasserstein1").size() == 12);  // 4 classes x 3 features
  for (const auto& d : distances.at("wasserstein1")) {
    CHECK(d.at("distance").get<double>() >= 0.0);
  }

  const auto outliers =
      nlohmann::json::parse(read_file(ws / "reports" / "outliers.json"));
  CHECK(outliers.at("real").at("total") == 80);
  CHECK(outliers.at("synthetic").at("total") == 80);
}
