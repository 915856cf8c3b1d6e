#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vadd/cli/app.hpp"
#include "vadd/cli/config.hpp"
#include "vadd/cli/io.hpp"
#include "vadd/cli/train.hpp"
#include "vadd/datagen.hpp"
#include "vadd/diff/params.hpp"
#include "vadd/error.hpp"

namespace fs = std::filesystem;
using namespace vadd;
using namespace vadd::cli;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

RunConfig smoke_config() {
  RunConfig c;
  c.dataset.n = 640;
  c.dataset.seed = 5;
  c.model.width = 32;
  c.model.time_features = 64;
  c.training.epochs = 2;
  c.training.batch = 64;
  c.training.anneal_epochs = 1;
  c.training.log_every = 1;
  c.sampling.n_samples = 500;
  c.eval.K = 8;
  c.eval.n_time_pairs = 2;
  c.eval.nll_sequences = 40;
  c.seed = 9;
  return c;
}

/// Scratch workspace with a config file and a generated dataset, shared by
/// the CLI cases.
struct Workspace {
  fs::path root;
  fs::path config;
  fs::path data;

  Workspace() {
    root = fs::temp_directory_path() / "vadd_unit_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    config = root / "smoke.json";
    write_json(config, to_json(smoke_config()));
    data = root / "data";
    REQUIRE(run({"gen-data", "--config", config.string(), "--out", data.string()}) == 0);
  }

  static int run(const std::vector<std::string>& args) { return run_cli(args); }

  fs::path trained(const std::string& model) {
    const fs::path out = root / ("train_" + model);
    if (!fs::exists(out / "checkpoint_final.json"))
      REQUIRE(run({"train", "--config", config.string(), "--model", model, "--data",
                   (data / "tokens.csv").string(), "--out", out.string()}) == 0);
    return out;
  }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const RunConfig d = config_from_json(nlohmann::json::object());
  CHECK(d.training.epochs == 500);
  CHECK(d.training.batch == 256);
  CHECK(d.optimizer.lr0 == doctest::Approx(3e-4));
  CHECK(d.model.vocab == 100);
  CHECK(d.model.seq_len == 2);
  CHECK(d.sampling.steps == std::vector<int>{1, 5});
  CHECK(d.eval.K == 1000);
  CHECK_THROWS_AS(config_from_json({{"trainng", {{"epochs", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"training", {{"epoch", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"training", {{"epochs", 0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"training", {{"epochs", "many"}}}}), ConfigError);
  const RunConfig s = smoke_config();
  CHECK(config_from_json(to_json(s)).training.batch == 64);
  CHECK(config_hash(config_from_json(to_json(s))) == config_hash(s));
  CHECK(config_hash(s) != config_hash(d));
  CHECK(config_hash(s).size() == 16);
}

TEST_CASE("train schedule") {
  RunConfig c = smoke_config();
  auto s = make_schedule(c, 640);
  CHECK(s.batch == 64);
  CHECK(s.steps_per_epoch == 10);
  CHECK(s.total_steps == 20);
  CHECK(s.anneal_steps == 10);
  s = make_schedule(c, 650);
  CHECK(s.steps_per_epoch == 10);
  s = make_schedule(c, 30);
  CHECK(s.batch == 30);
  CHECK(s.steps_per_epoch == 1);
}

TEST_CASE("gen-data is deterministic and rejects bad input") {
  auto& ws = workspace();
  const fs::path again = ws.root / "data_again";
  REQUIRE(Workspace::run({"gen-data", "--config", ws.config.string(), "--out", again.string()}) == 0);
  for (const char* f : {"points.csv", "tokens.csv", "manifest.json"}) CHECK(slurp(ws.data / f) == slurp(again / f));
  CHECK(lines(ws.data / "tokens.csv").size() == 641);
  CHECK(Workspace::run({"gen-data", "--dataset", "spiral", "--out", (ws.root / "x").string()}) == 2);
  CHECK(Workspace::run({"gen-data", "--n", "0", "--out", (ws.root / "x").string()}) == 2);
  CHECK(Workspace::run({"gen-data", "--bogus-flag"}) == 2);
  CHECK(Workspace::run({"no-such-command"}) == 2);
}

TEST_CASE("train writes loadable checkpoints and a lambda ramp") {
  auto& ws = workspace();
  const fs::path out = ws.trained("vadd");
  const auto ckpt = diff::load_checkpoint(out / "checkpoint_final.json");
  CHECK(ckpt.store.step_count() == 20);
  CHECK(kind_from_checkpoint(ckpt) == ModelKind::vadd);
  CHECK(config_hash(config_from_checkpoint(ckpt)) == config_hash(smoke_config()));
  CHECK_NOTHROW(diff::load_checkpoint(out / "checkpoint_best.json"));

  const auto rows = lines(out / "metrics.csv");
  REQUIRE(rows.size() == 21);
  CHECK(rows[0] == "step,epoch,lambda,lr,loss,recon,kl,t_mean");
  for (std::size_t h = 0; h < 20; ++h) {
    const auto cells = split(rows[h + 1]);
    REQUIRE(cells.size() == 8);
    CHECK(std::stoul(cells[0]) == h);
    const double lambda = std::stod(cells[2]);
    if (h < 10) {
      CHECK(lambda == doctest::Approx(static_cast<double>(h) / 10.0));
      CHECK(lambda < 1.0);
    } else {
      CHECK(lambda == 1.0);
    }
    CHECK(std::isfinite(std::stod(cells[4])));
  }
  CHECK(lines(out / "timing.csv").size() == 21);

  const fs::path mdlm = ws.trained("mdlm");
  CHECK(kind_from_checkpoint(diff::load_checkpoint(mdlm / "checkpoint_final.json")) == ModelKind::mdlm);
}

TEST_CASE("train resume continues the step count") {
  auto& ws = workspace();
  const fs::path out = ws.root / "train_resume";
  REQUIRE(Workspace::run({"train", "--config", ws.config.string(), "--data", (ws.data / "tokens.csv").string(),
                          "--epochs", "1", "--out", out.string()}) == 0);
  const auto first = diff::load_checkpoint(out / "checkpoint_final.json");
  CHECK(first.store.step_count() == 10);
  REQUIRE(Workspace::run({"train", "--config", ws.config.string(), "--data", (ws.data / "tokens.csv").string(),
                          "--epochs", "2", "--resume", (out / "checkpoint_final.json").string(), "--out",
                          out.string()}) == 0);
  CHECK(diff::load_checkpoint(out / "checkpoint_final.json").store.step_count() == 20);
  const auto rows = lines(out / "metrics.csv");
  REQUIRE(rows.size() == 21);
  for (std::size_t h = 0; h < 20; ++h) CHECK(std::stoul(split(rows[h + 1])[0]) == h);
}

TEST_CASE("train rejects missing data") {
  auto& ws = workspace();
  CHECK(Workspace::run({"train", "--config", ws.config.string(), "--out", (ws.root / "empty_train").string()}) == 2);
  CHECK(Workspace::run({"train", "--config", ws.config.string(), "--model", "gpt", "--data",
                        (ws.data / "tokens.csv").string(), "--out", (ws.root / "x").string()}) == 2);
}

TEST_CASE("sample writes mask-free samples deterministically") {
  auto& ws = workspace();
  const fs::path ckpt = ws.trained("vadd") / "checkpoint_final.json";
  for (int T : {1, 5}) {
    const fs::path a = ws.root / ("sample_a" + std::to_string(T)), b = ws.root / ("sample_b" + std::to_string(T));
    for (const auto& o : {a, b})
      REQUIRE(Workspace::run({"sample", "--config", ws.config.string(), "--checkpoint", ckpt.string(), "--steps",
                              std::to_string(T), "--n", "300", "--seed", "4", "--out", o.string()}) == 0);
    CHECK(slurp(a / "samples.csv") == slurp(b / "samples.csv"));
    const auto toks = data::read_tokens_csv(a / "samples.csv", 100);
    CHECK(toks.size() == 300);
    for (const auto& s : toks)
      for (int v : s.tokens) {
        CHECK(v >= 0);
        CHECK(v <= 99);
      }
    CHECK(fs::exists(a / "heatmap.ppm"));
    CHECK(lines(a / "counts.csv").size() == 10001);
  }
  const fs::path bad = ws.root / "corrupt.json";
  {
    std::ofstream f(bad);
    f << "{\"not\": \"a checkpoint\"";
  }
  CHECK(Workspace::run({"sample", "--checkpoint", bad.string(), "--out", (ws.root / "x").string()}) == 2);
  CHECK(Workspace::run({"sample", "--checkpoint", (ws.root / "missing.json").string()}) == 2);
  CHECK(Workspace::run({"sample", "--checkpoint", ckpt.string(), "--steps", "0"}) == 2);
}

TEST_CASE("eval reports JS for every T and a finite positive NLL") {
  auto& ws = workspace();
  for (const std::string model : {"vadd", "mdlm"}) {
    const fs::path out = ws.root / ("eval_" + model);
    REQUIRE(Workspace::run({"eval", "--config", ws.config.string(), "--checkpoint",
                            (ws.trained(model) / "checkpoint_final.json").string(), "--truth",
                            (ws.data / "tokens.csv").string(), "--steps", "1", "--steps", "3", "--n", "400",
                            "--out", out.string()}) == 0);
    const auto m = read_json(out / "metrics.json");
    for (const char* T : {"1", "3"}) {
      const double js = m.at("js").at(T).get<double>();
      CHECK(js >= 0.0);
      CHECK(js <= std::log(2.0));
    }
    const double nll = m.at("nll").get<double>();
    CHECK(std::isfinite(nll));
    CHECK(nll > 0.0);
    CHECK(m.at("model") == model);
    CHECK(m.at("nll_sequences") == 40);
  }
}

TEST_CASE("oracle scopes pass and write a report") {
  auto& ws = workspace();
  for (const char* scope : {"posterior", "masking", "gradcheck"}) {
    const fs::path out = ws.root / (std::string("oracle_") + scope);
    CHECK(Workspace::run({"oracle", "--config", ws.config.string(), "--scope", scope, "--out", out.string()}) == 0);
    const auto r = read_json(out / "report.json");
    CHECK(r.at("pass").get<bool>());
    CHECK(r.at("suites").contains(scope));
  }
  CHECK(Workspace::run({"oracle", "--scope", "everything"}) == 2);
}

TEST_CASE("checkpoint round trip is byte identical") {
  auto& ws = workspace();
  const fs::path src = ws.trained("vadd") / "checkpoint_final.json";
  const auto ckpt = diff::load_checkpoint(src);
  const fs::path copy = ws.root / "roundtrip.json";
  diff::save_checkpoint(copy, ckpt.store, ckpt.meta);
  CHECK(slurp(copy) == slurp(src));
}

TEST_CASE("heatmap and counts output") {
  eval::Histogram2D h(3);
  h.add(0, 1);
  h.add(0, 1);
  h.add(2, 2);
  const fs::path dir = fs::temp_directory_path() / "vadd_unit_io";
  fs::create_directories(dir);
  write_heatmap_ppm(dir / "h.ppm", h);
  const std::string ppm = slurp(dir / "h.ppm");
  const std::string header = "P6\n3 3\n255\n";
  REQUIRE(ppm.size() == header.size() + 27);
  CHECK(ppm.substr(0, header.size()) == header);
  const auto px = [&](int r, int c) { return static_cast<unsigned char>(ppm[header.size() + 3 * (r * 3 + c)]); };
  CHECK(px(0, 1) == 255);
  CHECK(px(2, 2) == 128);
  CHECK(px(1, 1) == 0);
  write_counts_csv(dir / "c.csv", h);
  const auto rows = lines(dir / "c.csv");
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == "x0,x1,count");
  CHECK(rows[2] == "0,1,2");
  CHECK(rows[9] == "2,2,1");
}
