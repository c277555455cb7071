#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "crackseg/data/dataset.hpp"
#include "crackseg/inference.hpp"
#include "crackseg/metrics.hpp"
#include "crackseg/network.hpp"

namespace crackseg {

struct DataConfig {
  std::string root;
  std::string name = "crack500";
  int image_size = 256;
  bool augment = true;
  BoundaryOptions boundary;
};

struct TrainConfig {
  int batch_size = 2;
  double learning_rate = 1e-4;
  int epochs = 100;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";  // empty: no checkpoints written
  int eval_every = 1;                          // epochs; 0 disables validation
  double lambda_boundary = 1.0;
  double weight_decay = 0;
  std::string lr_schedule = "none";  // none | cosine
  int log_every = 0;                 // iterations between "iter" log events; 0 = none
};

struct EvalConfig {
  double threshold = 0.5;
  Averaging averaging = Averaging::micro;
  InferenceOptions inference;
};

struct AppConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
};

namespace detail {

using boost::property_tree::ptree;

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  N out{};
  is >> out;
  if (is.fail() || !is.eof()) throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  return out;
}

template <typename N, std::size_t K>
std::array<N, K> parse_list(const std::string& key, const std::string& v) {
  std::array<N, K> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(key + ": empty list item");
    if (i >= K) throw ConfigError(key + ": expected " + std::to_string(K) + " values");
    out[i++] = parse_number<N>(key, item.substr(b, e - b + 1));
  }
  if (i != K) throw ConfigError(key + ": expected " + std::to_string(K) + " values");
  return out;
}

template <typename N, std::size_t K>
std::string join_list(const std::array<N, K>& a) {
  std::ostringstream os;
  for (std::size_t i = 0; i < K; ++i) os << (i ? "," : "") << a[i];
  return os.str();
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

// Parses INI text: [model], [data], [train] and [eval] sections of
// key = value lines. Missing keys keep their defaults; unknown sections or
// keys are errors.
inline AppConfig parse_config(const std::string& text) {
  detail::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  AppConfig cfg;
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const std::string k = section + "." + key;
      const std::string v = node.data();
      using detail::parse_bool, detail::parse_number, detail::parse_list;
      auto& m = cfg.model;
      auto& d = cfg.data;
      auto& t = cfg.train;
      auto& e = cfg.eval;
      if (section == "model") {
        if (key == "stage_channels") m.stage_channels = parse_list<int, 4>(k, v);
        else if (key == "bottleneck_channels") m.bottleneck_channels = parse_number<int>(k, v);
        else if (key == "mvb_depths") m.mvb_depths = parse_list<int, 3>(k, v);
        else if (key == "mvb_stages") {
          const auto s = parse_list<int, 4>(k, v);
          for (int i = 0; i < 4; ++i) m.mvb_stages[i] = s[i] != 0;
        } else if (key == "mvb_patch") m.mvb_patch = parse_number<int>(k, v);
        else if (key == "mvb_dim_ratio") m.mvb_dim_ratio = parse_number<double>(k, v);
        else if (key == "mvb_heads") m.mvb_heads = parse_number<int>(k, v);
        else if (key == "mvb_mlp_ratio") m.mvb_mlp_ratio = parse_number<double>(k, v);
        else if (key == "dilation_rates") m.dilation_rates = parse_list<int, 3>(k, v);
        else if (key == "se_reduction") m.se_reduction = parse_number<int>(k, v);
        else if (key == "use_drb") m.use_drb = parse_bool(k, v);
        else if (key == "use_mvb") m.use_mvb = parse_bool(k, v);
        else if (key == "use_bam") m.use_bam = parse_bool(k, v);
        else if (key == "in_channels") m.in_channels = parse_number<int>(k, v);
        else if (key == "out_channels") m.out_channels = parse_number<int>(k, v);
        else throw ConfigError("config: unknown key " + k);
      } else if (section == "data") {
        if (key == "root") d.root = v;
        else if (key == "name") d.name = v;
        else if (key == "image_size") d.image_size = parse_number<int>(k, v);
        else if (key == "augment") d.augment = parse_bool(k, v);
        else if (key == "boundary_kernel") d.boundary.kernel = parse_number<int>(k, v);
        else if (key == "boundary_iterations") d.boundary.iterations = parse_number<int>(k, v);
        else if (key == "boundary_ring") d.boundary.ring = parse_bool(k, v);
        else throw ConfigError("config: unknown key " + k);
      } else if (section == "train") {
        if (key == "batch_size") t.batch_size = parse_number<int>(k, v);
        else if (key == "learning_rate") t.learning_rate = parse_number<double>(k, v);
        else if (key == "epochs") t.epochs = parse_number<int>(k, v);
        else if (key == "optimizer") t.optimizer = v;
        else if (key == "seed") t.seed = parse_number<std::uint64_t>(k, v);
        else if (key == "checkpoint_dir") t.checkpoint_dir = v;
        else if (key == "eval_every") t.eval_every = parse_number<int>(k, v);
        else if (key == "lambda_boundary") t.lambda_boundary = parse_number<double>(k, v);
        else if (key == "weight_decay") t.weight_decay = parse_number<double>(k, v);
        else if (key == "lr_schedule") t.lr_schedule = v;
        else if (key == "log_every") t.log_every = parse_number<int>(k, v);
        else throw ConfigError("config: unknown key " + k);
      } else if (section == "eval") {
        if (key == "threshold") e.threshold = parse_number<double>(k, v);
        else if (key == "averaging") {
          if (v == "micro") e.averaging = Averaging::micro;
          else if (v == "macro") e.averaging = Averaging::macro;
          else throw ConfigError(k + ": expected micro or macro");
        } else if (key == "tile") e.inference.tile = parse_number<int>(k, v);
        else if (key == "overlap") e.inference.overlap = parse_number<int>(k, v);
        else if (key == "batch") e.inference.batch = parse_number<int>(k, v);
        else throw ConfigError("config: unknown key " + k);
      } else {
        throw ConfigError("config: unknown section [" + section + "]");
      }
    }
  }
  return cfg;
}

inline void validate(const AppConfig& c) {
  c.model.validate();
  const auto& t = c.train;
  if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(t.learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
  if (t.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (t.optimizer != "adam") throw ConfigError("train.optimizer: only adam is supported");
  if (t.eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (t.lambda_boundary < 0) throw ConfigError("train.lambda_boundary must be >= 0");
  if (t.lr_schedule != "none" && t.lr_schedule != "cosine") throw ConfigError("train.lr_schedule: none or cosine");
  if (c.data.image_size % c.model.required_divisor() != 0)
    throw ConfigError("data.image_size must be a multiple of " + std::to_string(c.model.required_divisor()));
  if (c.data.boundary.kernel < 3 || c.data.boundary.kernel % 2 == 0)
    throw ConfigError("data.boundary_kernel must be odd and >= 3");
  if (!(c.eval.threshold >= 0 && c.eval.threshold <= 1)) throw ConfigError("eval.threshold must lie in [0, 1]");
  if (c.eval.inference.tile % c.model.required_divisor() != 0)
    throw ConfigError("eval.tile must be a multiple of " + std::to_string(c.model.required_divisor()));
}

inline AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline std::string model_ini(const ModelConfig& m) {
  using detail::join_list, detail::fmt;
  std::ostringstream os;
  std::array<int, 4> stages{};
  for (int i = 0; i < 4; ++i) stages[i] = m.mvb_stages[i] ? 1 : 0;
  os << "[model]\n"
     << "stage_channels = " << join_list(m.stage_channels) << '\n'
     << "bottleneck_channels = " << m.bottleneck_channels << '\n'
     << "mvb_depths = " << join_list(m.mvb_depths) << '\n'
     << "mvb_stages = " << join_list(stages) << '\n'
     << "mvb_patch = " << m.mvb_patch << '\n'
     << "mvb_dim_ratio = " << fmt(m.mvb_dim_ratio) << '\n'
     << "mvb_heads = " << m.mvb_heads << '\n'
     << "mvb_mlp_ratio = " << fmt(m.mvb_mlp_ratio) << '\n'
     << "dilation_rates = " << join_list(m.dilation_rates) << '\n'
     << "se_reduction = " << m.se_reduction << '\n'
     << "use_drb = " << (m.use_drb ? "true" : "false") << '\n'
     << "use_mvb = " << (m.use_mvb ? "true" : "false") << '\n'
     << "use_bam = " << (m.use_bam ? "true" : "false") << '\n'
     << "in_channels = " << m.in_channels << '\n'
     << "out_channels = " << m.out_channels << '\n';
  return os.str();
}

// Inverse of parse_config for every field.
inline std::string to_ini(const AppConfig& c) {
  using detail::fmt;
  std::ostringstream os;
  const auto& d = c.data;
  const auto& t = c.train;
  const auto& e = c.eval;
  os << model_ini(c.model) << '\n'
     << "[data]\n"
     << "root = " << d.root << '\n'
     << "name = " << d.name << '\n'
     << "image_size = " << d.image_size << '\n'
     << "augment = " << (d.augment ? "true" : "false") << '\n'
     << "boundary_kernel = " << d.boundary.kernel << '\n'
     << "boundary_iterations = " << d.boundary.iterations << '\n'
     << "boundary_ring = " << (d.boundary.ring ? "true" : "false") << "\n\n"
     << "[train]\n"
     << "batch_size = " << t.batch_size << '\n'
     << "learning_rate = " << fmt(t.learning_rate) << '\n'
     << "epochs = " << t.epochs << '\n'
     << "optimizer = " << t.optimizer << '\n'
     << "seed = " << t.seed << '\n'
     << "checkpoint_dir = " << t.checkpoint_dir << '\n'
     << "eval_every = " << t.eval_every << '\n'
     << "lambda_boundary = " << fmt(t.lambda_boundary) << '\n'
     << "weight_decay = " << fmt(t.weight_decay) << '\n'
     << "lr_schedule = " << t.lr_schedule << '\n'
     << "log_every = " << t.log_every << "\n\n"
     << "[eval]\n"
     << "threshold = " << fmt(e.threshold) << '\n'
     << "averaging = " << (e.averaging == Averaging::micro ? "micro" : "macro") << '\n'
     << "tile = " << e.inference.tile << '\n'
     << "overlap = " << e.inference.overlap << '\n'
     << "batch = " << e.inference.batch << '\n';
  return os.str();
}

}  // namespace crackseg
