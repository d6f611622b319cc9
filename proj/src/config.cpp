#include "slc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace slc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

std::string join(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"n_classes", [](RunConfig& c, const std::string& v) { c.model.n_classes = parse_number<int>(v); }},
      {"stage_widths",
       [](RunConfig& c, const std::string& v) {
         const auto w = parse_int_list(v);
         if (w.size() != 5) throw ConfigError("stage_widths needs 5 values");
         for (std::size_t i = 0; i < 5; ++i) c.model.stage_widths[i] = w[i];
       }},
      {"fcsm_scales", [](RunConfig& c, const std::string& v) { c.model.fcsm_scales = parse_int_list(v); }},
      {"arfe_scales", [](RunConfig& c, const std::string& v) { c.model.arfe_scales = parse_int_list(v); }},
      {"d_small", [](RunConfig& c, const std::string& v) { c.model.d_small = parse_number<int>(v); }},
      {"d_large", [](RunConfig& c, const std::string& v) { c.model.d_large = parse_number<int>(v); }},
      {"supervised_fcsm", [](RunConfig& c, const std::string& v) { c.model.supervised_fcsm = parse_bool(v); }},
      {"backbone",
       [](RunConfig& c, const std::string& v) {
         if (v == "tiny") {
           c.model.backbone = BackboneKind::Tiny;
         } else if (v == "resnet50") {
           c.model.backbone = BackboneKind::ResNet50;
         } else {
           throw ConfigError("backbone must be tiny or resnet50");
         }
       }},
      {"stage_order",
       [](RunConfig& c, const std::string& v) {
         if (v == "row_first") {
           c.model.stage_order = StageOrder::RowFirst;
         } else if (v == "col_first") {
           c.model.stage_order = StageOrder::ColFirst;
         } else {
           throw ConfigError("stage_order must be row_first or col_first");
         }
       }},
      {"target_norm",
       [](RunConfig& c, const std::string& v) {
         if (v == "softmax") {
           c.model.target_norm = TargetNorm::Softmax;
         } else if (v == "uniform") {
           c.model.target_norm = TargetNorm::Uniform;
         } else {
           throw ConfigError("target_norm must be softmax or uniform");
         }
       }},
      {"alpha", [](RunConfig& c, const std::string& v) { c.model.loss.alpha = parse_number<double>(v); }},
      {"beta", [](RunConfig& c, const std::string& v) { c.model.loss.beta = parse_number<double>(v); }},
      {"gamma", [](RunConfig& c, const std::string& v) { c.model.loss.gamma = parse_number<double>(v); }},
      {"seed",
       [](RunConfig& c, const std::string& v) {
         c.seed = parse_number<std::uint64_t>(v);
         c.model.seed = c.seed;
       }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.epochs = parse_number<int>(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = parse_number<int>(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.lr = parse_number<double>(v); }},
      {"lr_drop_epochs", [](RunConfig& c, const std::string& v) { c.lr_drop_epochs = parse_int_list(v); }},
      {"tile_size", [](RunConfig& c, const std::string& v) { c.tile_size = parse_number<Index>(v); }},
      {"overlap", [](RunConfig& c, const std::string& v) { c.overlap = parse_number<double>(v); }},
      {"merge",
       [](RunConfig& c, const std::string& v) {
         if (v == "mean") {
           c.merge = MergeMode::Mean;
         } else if (v == "last_write") {
           c.merge = MergeMode::LastWrite;
         } else {
           throw ConfigError("merge must be mean or last_write");
         }
       }},
      {"augment", [](RunConfig& c, const std::string& v) { c.augment = parse_bool(v); }},
      {"blur_sigma", [](RunConfig& c, const std::string& v) { c.augment_options.blur_sigma = parse_number<double>(v); }},
      {"ignore_id",
       [](RunConfig& c, const std::string& v) {
         const int id = parse_number<int>(v);
         if (id < 0 || id > 255) throw ConfigError("ignore_id must be in [0, 255]");
         c.ignore_id = static_cast<std::uint8_t>(id);
       }},
      {"train_dir", [](RunConfig& c, const std::string& v) { c.train_dir = v; }},
      {"val_dir", [](RunConfig& c, const std::string& v) { c.val_dir = v; }},
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
      {"resume", [](RunConfig& c, const std::string& v) { c.resume = v; }},
  };
  return table;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  const std::string t = trim(text);
  if (t.empty() || t == "none") return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(trim(item)));
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected `key = value`");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  try {
    cfg.model.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw ConfigError("epochs must be >= 0 and batch_size >= 1");
  if (cfg.lr <= 0) throw ConfigError("lr must be positive");
  if (cfg.tile_size < 1) throw ConfigError("tile_size must be positive");
  if (!(cfg.overlap >= 0 && cfg.overlap < 1)) throw ConfigError("overlap must lie in [0, 1)");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& c) {
  std::ostringstream o;
  const auto& m = c.model;
  o << "n_classes = " << m.n_classes << "\n";
  o << "stage_widths = ";
  for (std::size_t i = 0; i < 5; ++i) o << (i ? "," : "") << m.stage_widths[i];
  o << "\n";
  o << "fcsm_scales = " << join(m.fcsm_scales) << "\n";
  o << "arfe_scales = " << join(m.arfe_scales) << "\n";
  o << "d_small = " << m.d_small << "\nd_large = " << m.d_large << "\n";
  o << "supervised_fcsm = " << (m.supervised_fcsm ? "true" : "false") << "\n";
  o << "backbone = " << (m.backbone == BackboneKind::Tiny ? "tiny" : "resnet50") << "\n";
  o << "stage_order = " << (m.stage_order == StageOrder::RowFirst ? "row_first" : "col_first") << "\n";
  o << "target_norm = " << (m.target_norm == TargetNorm::Softmax ? "softmax" : "uniform") << "\n";
  o << "alpha = " << m.loss.alpha << "\nbeta = " << m.loss.beta << "\ngamma = " << m.loss.gamma << "\n";
  o << "seed = " << c.seed << "\n";
  o << "epochs = " << c.epochs << "\nbatch_size = " << c.batch_size << "\nlr = " << c.lr << "\n";
  o << "lr_drop_epochs = " << join(c.lr_drop_epochs) << "\n";
  o << "tile_size = " << c.tile_size << "\noverlap = " << c.overlap << "\n";
  o << "merge = " << (c.merge == MergeMode::Mean ? "mean" : "last_write") << "\n";
  o << "augment = " << (c.augment ? "true" : "false") << "\nblur_sigma = " << c.augment_options.blur_sigma << "\n";
  o << "ignore_id = " << int(c.ignore_id) << "\n";
  o << "train_dir = " << c.train_dir << "\nval_dir = " << c.val_dir << "\nout_dir = " << c.out_dir << "\n";
  o << "resume = " << c.resume << "\n";
  return o.str();
}

}  // namespace slc
