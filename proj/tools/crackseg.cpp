// crackseg: train / evaluate / predict / ablate / params.
//
// Errors are reported as one line on stderr, "error <CODE>: <message>", with
// a nonzero exit status.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crackseg/checkpoint.hpp"
#include "crackseg/config.hpp"
#include "crackseg/train.hpp"

namespace fs = std::filesystem;
using namespace crackseg;

namespace {

struct Common {
  std::string config;
  std::string dataset;
  std::string checkpoint;
  std::string split;
  std::optional<double> threshold;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI config file");
  cmd->add_option("--dataset", c.dataset, "dataset root (overrides data.root)");
  cmd->add_option("--checkpoint", c.checkpoint, "checkpoint file");
  cmd->add_option("--split", c.split, "train, val or test");
  cmd->add_option("--threshold", c.threshold, "binarization threshold");
  cmd->add_option("--out", c.out, "output directory");
}

AppConfig resolve_config(const Common& c) {
  AppConfig cfg = c.config.empty() ? AppConfig{} : load_config(c.config);
  if (!c.dataset.empty()) cfg.data.root = c.dataset;
  if (c.threshold) cfg.eval.threshold = *c.threshold;
  validate(cfg);
  return cfg;
}

std::string millions(std::size_t n) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(n) / 1e6 << "M";
  return os.str();
}

Dataset open_dataset(const AppConfig& cfg) {
  if (cfg.data.root.empty()) throw ConfigError("no dataset root: set data.root or pass --dataset");
  Dataset ds = load_dataset(cfg.data.root, cfg.data.name);
  for (const auto& w : ds.manifest.warnings) std::cerr << "warning: " << w << '\n';
  return ds;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

int cmd_params(const Common& c) {
  const AppConfig cfg = resolve_config(c);
  CrackSegNet<float> model(cfg.model);
  std::size_t sum = 0;
  std::cout << std::left << std::setw(14) << "module" << "params\n";
  for (const auto& [group, count] : parameter_audit(model)) {
    std::cout << std::left << std::setw(14) << group << count << "  (" << millions(count) << ")\n";
    sum += count;
  }
  std::cout << std::left << std::setw(14) << "total" << sum << "  (" << millions(sum) << ")\n";
  return 0;
}

struct AblationRow {
  std::string name;
  std::size_t params = 0;
  std::optional<Prf1> scores;
};

int cmd_ablate(const Common& c, bool do_train) {
  const AppConfig cfg = resolve_config(c);
  std::vector<AblationRow> rows;
  std::optional<Dataset> ds;
  if (do_train) ds = open_dataset(cfg);
  for (const auto& [name, mcfg] : build_ablation_ladder(cfg.model)) {
    AblationRow row{name, 0, std::nullopt};
    CrackSegNet<float> model(mcfg, cfg.train.seed);
    row.params = count_parameters(model);
    if (do_train) {
      AppConfig vcfg = cfg;
      vcfg.model = mcfg;
      if (!vcfg.train.checkpoint_dir.empty()) vcfg.train.checkpoint_dir = (fs::path(cfg.train.checkpoint_dir) / name).string();
      DiskSource train_src(ds->split(Split::train), cfg.data.boundary);
      DiskSource val_src(ds->split(Split::val), cfg.data.boundary);
      std::ofstream logfile;
      EventLog log;
      if (!vcfg.train.checkpoint_dir.empty()) {
        fs::create_directories(vcfg.train.checkpoint_dir);
        logfile.open(fs::path(vcfg.train.checkpoint_dir) / "train_log.ndjson");
        log = EventLog(&logfile);
      }
      train(model, train_src, &val_src, vcfg, log);
      DiskSource test_src(ds->split(Split::test), cfg.data.boundary);
      row.scores = evaluate_source(model, test_src, cfg.eval).summary(cfg.eval.averaging);
    }
    rows.push_back(row);
  }
  auto cell = [](const std::optional<Prf1>& s, double Prf1::*field) {
    if (!s) return std::string("-");
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100 * (*s).*field;
    return os.str();
  };
  std::cout << std::left << std::setw(14) << "variant" << std::setw(10) << "params" << std::setw(7) << "Pr"
            << std::setw(7) << "Re" << "F1\n";
  std::ostringstream csv;
  csv << "variant,params,precision,recall,f1\n";
  nlohmann::json js = nlohmann::json::array();
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(14) << r.name << std::setw(10) << millions(r.params) << std::setw(7)
              << cell(r.scores, &Prf1::precision) << std::setw(7) << cell(r.scores, &Prf1::recall)
              << cell(r.scores, &Prf1::f1) << '\n';
    csv << r.name << ',' << r.params << ',' << cell(r.scores, &Prf1::precision) << ','
        << cell(r.scores, &Prf1::recall) << ',' << cell(r.scores, &Prf1::f1) << '\n';
    nlohmann::json j = {{"variant", r.name}, {"params", r.params}};
    if (r.scores) {
      j["precision"] = r.scores->precision;
      j["recall"] = r.scores->recall;
      j["f1"] = r.scores->f1;
    }
    js.push_back(j);
  }
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "ablation.csv", csv.str());
    write_text(fs::path(c.out) / "ablation.json", js.dump(2) + "\n");
  }
  return 0;
}

int cmd_train(const Common& c) {
  AppConfig cfg = resolve_config(c);
  if (!c.out.empty()) cfg.train.checkpoint_dir = c.out;
  const Dataset ds = open_dataset(cfg);
  DiskSource train_src(ds.split(Split::train), cfg.data.boundary);
  DiskSource val_src(ds.split(Split::val), cfg.data.boundary);
  CrackSegNet<float> model(cfg.model, cfg.train.seed);
  std::ofstream logfile;
  EventLog log;
  if (!cfg.train.checkpoint_dir.empty()) {
    fs::create_directories(cfg.train.checkpoint_dir);
    write_manifest(ds, fs::path(cfg.train.checkpoint_dir) / "manifest.json");
    logfile.open(fs::path(cfg.train.checkpoint_dir) / "train_log.ndjson", c.checkpoint.empty() ? std::ios::trunc : std::ios::app);
    log = EventLog(&logfile);
  }
  TrainPaths paths;
  if (!c.checkpoint.empty()) paths.resume = c.checkpoint;
  const TrainResult r = train(model, train_src, &val_src, cfg, log, paths);
  std::cout << "trained " << r.state.epochs_done << " epochs, " << r.state.iterations << " iterations";
  if (r.state.best_val_f1 >= 0) std::cout << ", best val F1 " << r.state.best_val_f1 << " at epoch " << r.state.best_epoch;
  std::cout << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, bool macro) {
  if (c.checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  AppConfig cfg = resolve_config(c);
  if (macro) cfg.eval.averaging = Averaging::macro;
  CheckpointReader reader(c.checkpoint);
  if (!c.config.empty() && !(reader.header().model == cfg.model))
    throw ConfigError("model section of " + c.config + " does not match checkpoint " + c.checkpoint);
  CrackSegNet<float> model(reader.header().model);
  reader.load_into(model);
  const Split split = c.split.empty() ? Split::test : parse_split(c.split);
  const Dataset ds = open_dataset(cfg);
  DiskSource src(ds.split(split), cfg.data.boundary);
  const MetricsReport report = evaluate_source(model, src, cfg.eval);
  std::cout << cfg.data.name << " " << split_name(split) << "  " << report.table_row(cfg.eval.averaging) << '\n';
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "metrics.csv", report.csv());
    write_text(fs::path(c.out) / "metrics.json", report.json(cfg.eval.threshold).dump(2) + "\n");
  }
  return 0;
}

int cmd_predict(const Common& c, const std::string& input, bool save_prob) {
  if (c.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  if (c.out.empty()) throw ConfigError("predict needs --out");
  AppConfig cfg = resolve_config(c);
  auto model = load_model<float>(c.checkpoint);
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && probe_image(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(input)) {
    files.push_back(input);
  } else {
    throw DataError("input not found: " + input);
  }
  fs::create_directories(c.out);
  InferenceOptions opt = cfg.eval.inference;
  opt.threshold = cfg.eval.threshold;
  for (const auto& f : files) {
    const Image img = read_rgb(f);
    const PredictionRecord rec = predict_image(*model, image_to_tensor<float>(img), opt);
    Image mask(rec.width, rec.height, 1);
    for (std::size_t i = 0; i < rec.mask.size(); ++i) mask.pixels[i] = rec.mask[i] ? 255 : 0;
    write_png(fs::path(c.out) / (f.stem().string() + ".png"), mask);
    if (save_prob) {
      std::vector<std::uint16_t> p(rec.probability.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<std::uint16_t>(std::lround(rec.probability[i] * 65535.0));
      write_png16(fs::path(c.out) / (f.stem().string() + "_prob.png"), rec.width, rec.height, p);
    }
    std::cout << f.filename().string() << "  " << rec.width << "x" << rec.height << "  " << std::fixed
              << std::setprecision(3) << rec.seconds << "s\n";
  }
  return 0;
}

int exit_code(const std::string& code) {
  if (code == "E_CONFIG" || code == "E_USAGE") return 2;
  if (code == "E_DATA") return 3;
  if (code == "E_CHECKPOINT") return 4;
  if (code == "E_TRAINING") return 5;
  return 1;
}

int fail(const std::string& code, std::string message) {
  for (char& ch : message)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << "error " << code << ": " << message << std::endl;
  return exit_code(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crack segmentation network: training, evaluation and inference"};
  app.require_subcommand(1);
  Common common;
  bool ablate_train = false, macro = false, save_prob = false;
  std::string input;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, common);
  auto* eval_cmd = app.add_subcommand("evaluate", "precision/recall/F1 on a dataset split");
  add_common(eval_cmd, common);
  eval_cmd->add_flag("--macro", macro, "average per-image scores instead of pooling counts");
  auto* predict_cmd = app.add_subcommand("predict", "write masks for images");
  add_common(predict_cmd, common);
  predict_cmd->add_option("--input", input, "image file or directory")->required();
  predict_cmd->add_flag("--save-prob", save_prob, "also write 16-bit probability PNGs");
  auto* ablate_cmd = app.add_subcommand("ablate", "ablation ladder report");
  add_common(ablate_cmd, common);
  ablate_cmd->add_flag("--train", ablate_train, "train and evaluate every variant");
  auto* params_cmd = app.add_subcommand("params", "parameter audit");
  add_common(params_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("E_USAGE", e.what());
  }

  try {
    if (*train_cmd) return cmd_train(common);
    if (*eval_cmd) return cmd_evaluate(common, macro);
    if (*predict_cmd) return cmd_predict(common, input, save_prob);
    if (*ablate_cmd) return cmd_ablate(common, ablate_train);
    if (*params_cmd) return cmd_params(common);
  } catch (const Error& e) {
    return fail(e.code(), e.what());
  } catch (const std::exception& e) {
    return fail("E_INTERNAL", e.what());
  }
  return 0;
}
