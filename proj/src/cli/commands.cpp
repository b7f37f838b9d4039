#include "uattr/cli/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "uattr/cli/artifacts.hpp"
#include "uattr/cli/pipeline.hpp"
#include "uattr/models/checkpoint.hpp"

namespace uattr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json module_versions() {
  return json{{"diffcore", "1"},   {"models", "1"},     {"uncertainty", "1"},
              {"attribution", "1"}, {"evaluation", "1"}, {"cli", "1"}, {"uattr", kVersion}};
}

json manifest_base(const std::string& command, const RunConfig& cfg) {
  return json{{"command", command}, {"seed", cfg.u64("seed")}, {"versions", module_versions()}};
}

void write_manifest(OutputSet& outs, const fs::path& path, json manifest, const RunConfig& cfg,
                    const std::vector<fs::path>& files, const fs::path& root) {
  json config = json::object();
  for (const auto& [k, v] : cfg.consumed()) config[k] = v;
  manifest["config"] = config;
  json listed = json::array();
  for (const auto& f : files) listed.push_back(fs::relative(f, root).generic_string());
  manifest["outputs"] = listed;
  write_text(outs.add(path), manifest.dump(2) + "\n");
}

std::string image_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu", i);
  return buf;
}

std::string part_suffix(const std::string& part) { return part.empty() ? "" : "." + part; }

models::TrainingEcho echo_of(const models::TrainConfig& c) {
  return models::TrainingEcho{c.seed, static_cast<std::uint32_t>(c.epochs), c.learning_rate};
}

std::size_t image_count(const RunConfig& cfg, const Datasets& data) {
  const auto n = std::min(cfg.count("images"), data.validation.size());
  if (n == 0) throw ConfigError("images must be at least 1");
  return n;
}

json counterfactual_json(const attribution::CounterfactualResult& cf) {
  return json{{"entropy", cf.entropy},
              {"target_missed", cf.target_missed},
              {"target_class", cf.target_class},
              {"predicted_class", cf.predicted_class},
              {"iterations", cf.iterations}};
}

evaluation::Aggregate parse_aggregate(const std::string& s) {
  if (s == "mean") return evaluation::Aggregate::Mean;
  if (s == "median") return evaluation::Aggregate::Median;
  throw ConfigError("aggregate must be 'mean' or 'median', got '" + s + "'");
}

struct EvaluateResult {
  evaluation::EvaluationSummary summary;
  double blur_std = 0.0;
};

EvaluateResult evaluate_run(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.str("out");
  const auto method = parse_method(cfg.str("method"));
  const auto how = parse_aggregate(cfg.str("aggregate"));
  const auto grid = cfg.reals("blur_grid");
  const auto threads = cfg.count("threads");
  const auto data = load_datasets(cfg);
  const auto count = image_count(cfg, data);
  const auto classifier = models::load_classifier(out / "classifier.uatw").model;
  const auto& val = data.validation;

  OutputSet outs;
  std::vector<fs::path> files;
  const double std = evaluation::tune_blur_std(classifier, val, grid);
  log << "evaluate: blur std " << std << " from grid of " << grid.size() << "\n";
  const evaluation::CurveConfig curve_cfg{val.width, val.height, evaluation::BlurConfig{std}};

  const fs::path map_dir = out / "maps" / method_name(method);
  const auto part = evaluated_part(method);
  std::vector<diff::Tensor> maps;
  for (std::size_t i = 0; i < count; ++i) {
    const auto m = read_map(map_dir / (image_stem(i) + part_suffix(part) + ".map"));
    if (m.width != val.width || m.height != val.height) throw std::runtime_error("map size does not match the data");
    maps.push_back(m.values);
  }
  struct Curves {
    evaluation::CurveResult eic, urc;
  };
  const auto curves = parallel_map<Curves>(count, threads, [&](std::size_t i) {
    return Curves{evaluation::eic(classifier, val.images[i], maps[i], curve_cfg),
                  evaluation::urc(classifier, val.images[i], maps[i], curve_cfg)};
  });

  const fs::path curve_dir = out / "curves" / method_name(method);
  std::vector<evaluation::CurveResult> eics, urcs;
  json per_image = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    for (const auto* c : {&curves[i].eic, &curves[i].urc}) {
      std::ostringstream csv;
      evaluation::write_curve_csv(csv, *c);
      const auto path = curve_dir / (image_stem(i) + (c == &curves[i].eic ? "_eic.csv" : "_urc.csv"));
      write_text(outs.add(path), csv.str());
      files.push_back(path);
    }
    eics.push_back(curves[i].eic);
    urcs.push_back(curves[i].urc);
    json entry{{"excluded", curves[i].eic.excluded || curves[i].urc.excluded}};
    if (!entry["excluded"].get<bool>()) {
      entry["area_over_eic"] = evaluation::area_over_eic(curves[i].eic);
      entry["urc_at_5pct"] = evaluation::urc_at(curves[i].urc, 0.05);
    }
    per_image.push_back(entry);
  }
  const auto summary = evaluation::summarize(eics, urcs, how);
  const auto agg_name = cfg.str("aggregate");
  if (summary.excluded_count < count) {
    for (const auto* list : {&eics, &urcs}) {
      std::ostringstream csv;
      evaluation::write_curve_csv(csv, evaluation::aggregate_curves(*list, how));
      const auto path = curve_dir / ((list == &eics ? "eic_" : "urc_") + agg_name + ".csv");
      write_text(outs.add(path), csv.str());
      files.push_back(path);
    }
  }
  std::ostringstream text;
  evaluation::write_summary(text, summary);
  const auto summary_path = curve_dir / "summary.txt";
  write_text(outs.add(summary_path), text.str());
  files.push_back(summary_path);

  auto manifest = manifest_base("evaluate", cfg);
  manifest["method"] = method_name(method);
  manifest["blur_std"] = std;
  manifest["blur_profile"] = evaluation::blurred_entropy_profile(classifier, val, grid);
  manifest["summary"] = json{{"area_over_eic", summary.area_over_eic},
                             {"urc_at_1pct", summary.urc_at_1pct},
                             {"urc_at_5pct", summary.urc_at_5pct},
                             {"excluded_count", summary.excluded_count},
                             {"image_count", summary.image_count}};
  manifest["images"] = per_image;
  write_manifest(outs, out / ("evaluate_" + method_name(method) + "_manifest.json"), manifest, cfg, files, out);
  outs.commit();
  log << "evaluate: " << method_name(method) << " area_over_eic=" << summary.area_over_eic
      << " urc_at_5pct=" << summary.urc_at_5pct << " excluded=" << summary.excluded_count << "\n";
  return EvaluateResult{summary, std};
}

}  // namespace

RunConfig resolve_config(const CommandLine& cl) {
  RunConfig cfg = cl.config ? RunConfig::load(*cl.config) : RunConfig{};
  if (cl.method) cfg.set("method", *cl.method);
  if (cl.out) cfg.set("out", cl.out->string());
  if (cl.seed) cfg.set("seed", std::to_string(*cl.seed));
  return cfg;
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.str("out");
  const auto data = load_datasets(cfg);
  const auto ccfg = classifier_config(cfg);
  const auto vcfg = vae_config(cfg);
  OutputSet outs;
  std::vector<fs::path> files;

  log << "train: classifier on " << data.train.size() << " images\n";
  const auto classifier = models::train_classifier(data.train, ccfg);
  const double acc = models::accuracy(classifier.model, data.validation);
  log << "train: validation accuracy " << acc << "\n";
  log << "train: VAE with latent dimension " << vcfg.latent_dim << "\n";
  const auto vae = models::train_vae(data.train, vcfg);

  const auto cpath = out / "classifier.uatw", vpath = out / "vae.uatw";
  models::save_checkpoint(classifier.model, echo_of(ccfg), outs.add(cpath));
  models::save_checkpoint(vae.model, echo_of(vcfg), outs.add(vpath));
  files = {cpath, vpath};

  auto manifest = manifest_base("train", cfg);
  manifest["classifier"] = json{{"epoch_losses", classifier.epoch_losses}, {"validation_accuracy", acc}};
  manifest["vae"] = json{{"epoch_losses", vae.epoch_losses}};
  manifest["data"] = json{{"train", data.train.size()}, {"validation", data.validation.size()}};
  write_manifest(outs, out / "train_manifest.json", manifest, cfg, files, out);
  outs.commit();
}

void cmd_attribute(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.str("out");
  const auto method = parse_method(cfg.str("method"));
  const auto settings = attribution_settings(cfg);
  const bool pgm = cfg.flag("pgm");
  const auto threads = cfg.count("threads");
  const auto data = load_datasets(cfg);
  const auto count = image_count(cfg, data);
  const auto classifier = models::load_classifier(out / "classifier.uatw").model;
  const auto vae = models::load_vae(out / "vae.uatw").model;
  const auto& val = data.validation;
  if (classifier.input_dim() != val.pixel_count() || vae.input_dim() != val.pixel_count()) {
    throw std::runtime_error("checkpoints do not match the image size of the data");
  }
  const auto samples = posterior_samples(classifier, settings);

  log << "attribute: " << method_name(method) << " on " << count << " images\n";
  const auto results = parallel_map<std::vector<NamedMap>>(count, threads, [&](std::size_t i) {
    return attribute_image(method, classifier, vae, val.images[i], settings, samples);
  });

  OutputSet outs;
  std::vector<fs::path> files;
  const fs::path dir = out / "maps" / method_name(method);
  json per_image = json::array();
  std::size_t complete = 0, parts = 0, cf_total = 0, cf_success = 0;
  for (std::size_t i = 0; i < count; ++i) {
    json entry{{"index", i}, {"label", val.labels[i]}};
    json maps = json::object();
    for (const auto& [part, m] : results[i]) {
      const auto stem = image_stem(i) + part_suffix(part);
      MapFile f{val.width, val.height, method_name(method), m.residual, m.f_input, m.f_fiducial, m.values};
      write_map(outs.add(dir / (stem + ".map")), f);
      files.push_back(dir / (stem + ".map"));
      if (pgm) {
        write_attribution_pgm(outs.add(dir / (stem + ".pgm")), m.values, val.width, val.height);
        files.push_back(dir / (stem + ".pgm"));
      }
      const bool ok = completeness_ok(m);
      complete += ok;
      ++parts;
      maps[part.empty() ? "map" : part] =
          json{{"residual", m.residual}, {"f_input", m.f_input}, {"f_fiducial", m.f_fiducial}, {"completeness_ok", ok}};
    }
    entry["maps"] = maps;
    const auto& first = results[i].front().map;
    if (first.counterfactual) {
      entry["counterfactual"] = counterfactual_json(*first.counterfactual);
      ++cf_total;
      cf_success += !first.counterfactual->target_missed;
    }
    per_image.push_back(entry);
  }

  auto manifest = manifest_base("attribute", cfg);
  manifest["method"] = method_name(method);
  manifest["images"] = per_image;
  manifest["completeness_pass_rate"] = static_cast<double>(complete) / static_cast<double>(parts);
  if (cf_total > 0) {
    manifest["counterfactual_success_rate"] = static_cast<double>(cf_success) / static_cast<double>(cf_total);
  }
  write_manifest(outs, out / ("attribute_" + method_name(method) + "_manifest.json"), manifest, cfg, files, out);
  outs.commit();
  log << "attribute: completeness within budget for " << complete << "/" << parts << " maps\n";
}

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) { evaluate_run(cfg, log); }

void cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  const fs::path out = cfg.str("out");
  const auto dims = cfg.counts("sweep_latent_dims");
  if (dims.empty()) throw ConfigError("sweep_latent_dims is empty");
  const fs::path sweep_dir = out / "sweep";
  const bool existed = fs::exists(sweep_dir);
  OutputSet outs;
  try {
    std::ostringstream report;
    report << "latent_dim,area_over_eic,urc_at_1pct,urc_at_5pct\n";
    json rows = json::array();
    std::vector<double> areas;
    std::map<std::string, std::string> sub_consumed;
    for (auto m : dims) {
      RunConfig sub = cfg;
      sub.set("latent_dim", std::to_string(m));
      sub.set("method", "generative");
      sub.set("out", (sweep_dir / ("latent_" + std::to_string(m))).string());
      log << "sweep: latent dimension " << m << "\n";
      cmd_train(sub, log);
      cmd_attribute(sub, log);
      const auto r = evaluate_run(sub, log);
      report << m << ',' << format_number(r.summary.area_over_eic) << ',' << format_number(r.summary.urc_at_1pct)
             << ',' << format_number(r.summary.urc_at_5pct) << '\n';
      rows.push_back(json{{"latent_dim", m},
                          {"area_over_eic", r.summary.area_over_eic},
                          {"urc_at_1pct", r.summary.urc_at_1pct},
                          {"urc_at_5pct", r.summary.urc_at_5pct},
                          {"excluded_count", r.summary.excluded_count}});
      areas.push_back(r.summary.area_over_eic);
      for (const auto& [k, v] : sub.consumed()) {
        if (k != "latent_dim" && k != "out") sub_consumed[k] = v;
      }
    }
    const auto report_path = out / "sweep_report.csv";
    write_text(outs.add(report_path), report.str());
    const double best = *std::max_element(areas.begin(), areas.end());
    const bool plateau = std::all_of(areas.begin(), areas.end(), [&](double a) { return best - a <= 0.15; });
    auto manifest = manifest_base("sweep", cfg);
    manifest["rows"] = rows;
    manifest["plateau_within_0_15"] = plateau;
    json sub_json = json::object();
    for (const auto& [k, v] : sub_consumed) sub_json[k] = v;
    manifest["run_config"] = sub_json;
    write_manifest(outs, out / "sweep_manifest.json", manifest, cfg, {report_path}, out);
    outs.commit();
    log << report.str();
  } catch (...) {
    std::error_code ec;
    if (!existed) fs::remove_all(sweep_dir, ec);
    throw;
  }
}

int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err) {
  try {
    const auto cfg = resolve_config(cl);
    if (cl.command == "train") cmd_train(cfg, log);
    else if (cl.command == "attribute") cmd_attribute(cfg, log);
    else if (cl.command == "evaluate") cmd_evaluate(cfg, log);
    else if (cl.command == "sweep") cmd_sweep(cfg, log);
    else throw ConfigError("unknown command '" + cl.command + "'");
    return 0;
  } catch (const ConfigError& e) {
    err << "uattr: config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "uattr: " << cl.command << " failed: " << e.what() << "\n";
    return 1;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Uncertainty attributions for dropout classifiers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  CommandLine cl;
  std::string config, method, out;
  std::uint64_t seed = 0;
  for (const char* name : {"train", "attribute", "evaluate", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "key=value run configuration")->check(CLI::ExistingFile);
    sub->add_option("--method", method, "attribution method");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "random seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (auto* sub : app.get_subcommands()) {
    cl.command = sub->get_name();
    if (sub->count("--config")) cl.config = config;
    if (sub->count("--method")) cl.method = method;
    if (sub->count("--out")) cl.out = out;
    if (sub->count("--seed")) cl.seed = seed;
  }
  return run_command(cl, std::cout, std::cerr);
}

}  // namespace uattr::cli
