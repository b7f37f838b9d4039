#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uattr/cli/artifacts.hpp"
#include "uattr/cli/commands.hpp"
#include "uattr/cli/config.hpp"
#include "uattr/cli/pipeline.hpp"

using namespace uattr;
using namespace uattr::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("uattr_cli_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig small_config(const fs::path& out) {
  auto cfg = RunConfig::parse(
      "train_count=200\nval_count=20\nclassifier_hidden=32\nclassifier_epochs=3\n"
      "vae_hidden=32\nlatent_dim=4\nvae_epochs=3\nimages=10\nbins=10\nmax_iterations=100\n"
      "posterior_samples=4\nsweep_latent_dims=4,8,16,32\n");
  cfg.set("out", out.string());
  return cfg;
}

std::string bytes_of(const fs::path& p) { return read_text(p); }

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"uattr"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return main_entry(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("config parsing") {
  auto cfg = RunConfig::parse("# comment\nseed = 11\nbins=20\n\nblur_grid=1,2.5\n");
  CHECK(cfg.u64("seed") == 11);
  CHECK(cfg.count("bins") == 20);
  CHECK(cfg.reals("blur_grid") == std::vector<double>{1.0, 2.5});
  CHECK(cfg.str("dataset") == "synthetic");
  CHECK(cfg.consumed().count("seed") == 1);
  CHECK(cfg.consumed().count("latent_dim") == 0);

  CHECK_THROWS_AS(RunConfig::parse("no_such_key=1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed=1\nseed=2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("seed=abc\n").u64("seed"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("pgm=maybe\n").flag("pgm"), ConfigError);

  const auto echoed = RunConfig::parse(cfg.echo());
  CHECK(echoed.effective() == cfg.effective());

  CHECK(parse_method("bayesian-generative") == Method::BayesianGenerative);
  CHECK_THROWS_AS(parse_method("lime"), ConfigError);
  for (auto m : all_methods()) CHECK(parse_method(method_name(m)) == m);
}

TEST_CASE("map files and pgm") {
  const auto dir = scratch("maps");
  fs::create_directories(dir);
  MapFile m{2, 3, "generative", 1e-3, 0.5, 0.01, Tensor({6}, {0.1, -0.25, 0.0, 1.0 / 3.0, -1e-300, 42.0})};
  write_map(dir / "a.map", m);
  const auto back = read_map(dir / "a.map");
  CHECK(back.width == 2);
  CHECK(back.height == 3);
  CHECK(back.method == "generative");
  CHECK(back.residual == m.residual);
  CHECK(back.f_input == m.f_input);
  CHECK(back.f_fiducial == m.f_fiducial);
  CHECK(std::ranges::equal(back.values.data(), m.values.data()));

  write_text(dir / "bad.map", "width=2\nheight=2\nvalues\n1\n2\n3\n");
  CHECK_THROWS(read_map(dir / "bad.map"));

  const auto levels = attribution_gray_levels(Tensor({3}, {-2.0, 0.0, 1.0}));
  CHECK(levels == std::vector<unsigned char>{1, 128, 192});
  CHECK(attribution_gray_levels(Tensor({2}, {0.0, 0.0})) == std::vector<unsigned char>{128, 128});

  write_attribution_pgm(dir / "a.pgm", m.values, 2, 3);
  const auto pgm = bytes_of(dir / "a.pgm");
  const std::string header = "P5\n2 3\n255\n";
  REQUIRE(pgm.size() == header.size() + 6);
  CHECK(pgm.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(pgm.back()) == 255);
  fs::remove_all(dir);
}

TEST_CASE("output set removes uncommitted files") {
  const auto dir = scratch("outputs");
  {
    OutputSet outs;
    write_text(outs.add(dir / "a" / "b.txt"), "x");
    CHECK(fs::exists(dir / "a" / "b.txt"));
  }
  CHECK_FALSE(fs::exists(dir / "a"));
  {
    OutputSet outs;
    write_text(outs.add(dir / "c.txt"), "x");
    outs.commit();
  }
  CHECK(fs::exists(dir / "c.txt"));
  fs::remove_all(dir);
}

TEST_CASE("parallel map keeps order and rethrows") {
  const auto squares = parallel_map<std::size_t>(50, 4, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < 50; ++i) CHECK(squares[i] == i * i);
  CHECK_THROWS_AS(run_parallel(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw std::runtime_error("seven");
                               }),
                  std::runtime_error);
}

TEST_CASE("train is deterministic") {
  const auto a = scratch("train_a"), b = scratch("train_b");
  std::ostringstream log;
  cmd_train(small_config(a), log);
  cmd_train(small_config(b), log);
  for (const char* f : {"classifier.uatw", "vae.uatw"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(bytes_of(a / f) == bytes_of(b / f));
  }
  const auto manifest = nlohmann::json::parse(bytes_of(a / "train_manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["config"]["latent_dim"] == "4");
  CHECK(manifest["versions"].contains("diffcore"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("attribute and evaluate") {
  const auto out = scratch("attribute");
  std::ostringstream log;
  auto cfg = small_config(out);
  cmd_train(cfg, log);
  cfg.set("method", "generative");
  cmd_attribute(cfg, log);
  const auto dir = out / "maps" / "generative";
  std::size_t maps = 0;
  for (const auto& e : fs::directory_iterator(dir)) maps += e.path().extension() == ".map";
  CHECK(maps == 10);
  const auto manifest = nlohmann::json::parse(bytes_of(out / "attribute_generative_manifest.json"));
  REQUIRE(manifest["images"].size() == 10);
  for (const auto& img : manifest["images"]) {
    const double r = img["maps"]["map"]["residual"];
    CHECK(std::isfinite(r));
    CHECK(img.contains("counterfactual"));
  }
  CHECK(manifest.contains("counterfactual_success_rate"));
  const auto m = read_map(dir / "img_0000.map");
  double total = 0.0;
  for (double v : m.values.data()) total += v;
  CHECK(m.residual == doctest::Approx(std::fabs(total - (m.f_input - m.f_fiducial))).epsilon(1e-9));

  cmd_evaluate(cfg, log);
  const auto curves = out / "curves" / "generative";
  CHECK(fs::exists(curves / "img_0009_eic.csv"));
  CHECK(fs::exists(curves / "summary.txt"));
  CHECK(bytes_of(curves / "img_0000_eic.csv").rfind("step,fraction,info_content,value\n", 0) == 0);

  cfg.set("method", "bayesian-generative");
  cfg.set("images", "2");
  cmd_attribute(cfg, log);
  for (const char* part : {"full", "aleatoric", "epistemic"}) {
    CHECK(fs::exists(out / "maps" / "bayesian-generative" / (std::string("img_0001.") + part + ".map")));
  }
  fs::remove_all(out);
}

TEST_CASE("sweep report") {
  const auto out = scratch("sweep");
  std::ostringstream log;
  auto cfg = small_config(out);
  cfg.set("images", "3");
  cmd_sweep(cfg, log);
  std::istringstream report(bytes_of(out / "sweep_report.csv"));
  std::string line;
  std::getline(report, line);
  CHECK(line == "latent_dim,area_over_eic,urc_at_1pct,urc_at_5pct");
  std::vector<std::string> dims;
  while (std::getline(report, line)) {
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    dims.push_back(cell);
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(dims == std::vector<std::string>{"4", "8", "16", "32"});
  fs::remove_all(out);
}

TEST_CASE("exit codes and cleanup") {
  const auto out = scratch("exit");
  CHECK(run({"attribute", "--out", out.string()}) == 1);
  CHECK_FALSE(fs::exists(out / "maps"));

  const auto cfg_path = fs::temp_directory_path() / "uattr_cli_bad.cfg";
  write_text(cfg_path, "latent_size=3\n");
  CHECK(run({"train", "--config", cfg_path.string(), "--out", out.string()}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({"attribute", "--method", "nope", "--out", out.string()}) == 2);

  write_text(cfg_path,
             "train_count=100\nval_count=10\nclassifier_epochs=1\nvae_epochs=1\nvae_hidden=16\n"
             "classifier_hidden=16\nimages=2\nbins=4\nmax_iterations=10\nsweep_latent_dims=4,1\n");
  CHECK(run({"sweep", "--config", cfg_path.string(), "--out", out.string()}) == 2);
  CHECK_FALSE(fs::exists(out / "sweep"));
  fs::remove_all(out);
  fs::remove(cfg_path);
}
