#include "commands.hpp"

#include "slc/checkpoint.hpp"
#include "slc/config.hpp"
#include "slc/gradcheck.hpp"
#include "slc/metrics.hpp"
#include "slc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

namespace fs = std::filesystem;

namespace slc::cli {
namespace {

bool is_raster(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

/// Raster files in `dir` keyed by stem.
std::map<std::string, fs::path> rasters_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_raster(entry.path())) out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

template <typename S>
int train_impl(const RunConfig& cfg, std::ostream& out) {
  if (cfg.train_dir.empty()) throw ConfigError("train_dir is not set");
  const Dataset train = load_dataset(cfg.train_dir, cfg.ignore_id);
  const Dataset val = cfg.val_dir.empty() ? Dataset{} : load_dataset(cfg.val_dir, cfg.ignore_id);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.txt", format_config(cfg));

  std::ofstream log(dir / "train_log.tsv", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + (dir / "train_log.tsv").string());
  log << log_header() << '\n';
  out << log_header() << '\n';

  Trainer<S> trainer(cfg);
  trainer.fit(train, val, dir / "model.slcw", [&](const EpochLog& e) {
    log << log_row(e) << '\n';
    log.flush();
    out << log_row(e) << '\n';
    out.flush();
  });
  out << "checkpoint: " << (dir / "model.slcw").string() << '\n';
  return kOk;
}

template <typename S>
int predict_impl(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const auto stored = read_checkpoint(a.checkpoint);
  const ModelConfig mc = config_from_checkpoint(stored);
  Index tile = a.tile > 0 ? a.tile : tile_size_from_checkpoint(stored);
  if (tile <= 0) tile = 256;

  Palette palette;
  if (!a.overlay.empty()) {
    palette = a.palette.empty() ? Palette::standard(mc.n_classes) : Palette::load(a.palette);
    if (static_cast<int>(palette.colors.size()) < mc.n_classes) {
      err << "palette has " << palette.colors.size() << " colors but the model predicts " << mc.n_classes
          << " classes\n";
      return kUsageError;
    }
  }

  SlcNet<S> model(mc);
  load_state(model, stored);
  model.eval();

  std::vector<std::pair<fs::path, fs::path>> jobs;  // input, label output
  fs::path overlay_dir;
  const bool batch = fs::is_directory(a.image);
  if (batch) {
    fs::create_directories(a.out);
    if (!a.overlay.empty()) fs::create_directories(a.overlay);
    for (const auto& [stem, path] : rasters_by_stem(a.image)) jobs.emplace_back(path, fs::path(a.out) / (stem + ".png"));
  } else {
    jobs.emplace_back(a.image, a.out);
  }

  for (const auto& [in, label_path] : jobs) {
    const Image8 image = load_image(in);
    const LabelMap pred = predict_image(model, image, tile, a.overlap, a.merge);
    save_labels(label_path, pred);
    if (!a.overlay.empty()) {
      const fs::path ov = batch ? fs::path(a.overlay) / label_path.filename() : fs::path(a.overlay);
      write_raster(ov, palette.colorize(pred));
    }
    out << in.string() << " -> " << label_path.string() << " (" << image.height << "x" << image.width << ")\n";
  }
  return kOk;
}

}  // namespace

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  try {
    RunConfig cfg = load_config(a.config);
    if (a.seed) {
      cfg.seed = *a.seed;
      cfg.model.seed = *a.seed;
    }
    if (!a.out.empty()) cfg.out_dir = a.out;
    return a.fp64 ? train_impl<double>(cfg, out) : train_impl<float>(cfg, out);
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

int predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  try {
    return a.fp64 ? predict_impl<double>(a, out, err) : predict_impl<float>(a, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

int eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto preds = rasters_by_stem(a.pred_dir);
    const auto gts = rasters_by_stem(a.gt_dir);
    std::vector<std::string> missing;
    std::vector<std::pair<LabelMap, LabelMap>> pairs;
    for (const auto& [stem, path] : preds) {
      auto g = gts.find(stem);
      if (g == gts.end()) {
        missing.push_back(path.string());
        continue;
      }
      pairs.emplace_back(load_labels(path), load_labels(g->second));
    }
    for (const auto& [stem, path] : gts) {
      if (!preds.count(stem)) missing.push_back(path.string());
    }

    const std::set<int> ignore(a.ignore.begin(), a.ignore.end());
    int n = a.n_classes;
    if (n <= 0) {
      int top = -1;
      for (const auto& [p, g] : pairs) {
        for (auto v : p.ids) top = std::max<int>(top, v);
        for (auto v : g.ids) {
          if (v != kIgnoreId && !ignore.count(v)) top = std::max<int>(top, v);
        }
      }
      n = top + 1;
    }
    if (n <= 0) throw std::runtime_error("no labelled pixels to evaluate");

    ConfusionMatrix cm(n);
    for (auto& [p, g] : pairs) {
      if (p.height != g.height || p.width != g.width) throw ContractError("prediction and ground truth sizes differ");
      for (auto& v : g.ids) {
        if (ignore.count(v)) v = g.ignore_id;
      }
      accumulate(p, g, cm);
    }
    std::vector<int> excluded;
    for (int id : ignore) {
      if (id >= 0 && id < n) excluded.push_back(id);
    }
    const std::string report = metrics_report(scores(cm, excluded));
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "metrics.txt", report);
    out << report;
    out << "evaluated " << pairs.size() << " pairs\n";

    if (!missing.empty()) {
      err << "missing counterparts (skipped):\n";
      for (const auto& m : missing) err << "  " << m << '\n';
      return kUsageError;
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

int synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  try {
    SynthSpec spec;
    if (a.kind == "shapes") {
      spec.kind = SynthKind::Shapes;
    } else if (a.kind == "longrange") {
      spec.kind = SynthKind::LongRange;
    } else {
      err << "unknown kind '" << a.kind << "' (shapes|longrange)\n";
      return kUsageError;
    }
    spec.height = spec.width = a.size;
    spec.n_classes = a.n_classes;
    spec.n_images = a.n_images;
    spec.noise_sigma = a.noise;
    spec.seed = a.seed;
    save_dataset(a.out, generate_synthetic(spec));
    out << "wrote " << a.n_images << " samples to " << a.out << '\n';
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

int tiles(const TilesArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto [train, val] = cut_tiles(load_dataset(a.data), a.size, a.holdout, a.seed);
    save_dataset(fs::path(a.out) / "train", train);
    save_dataset(fs::path(a.out) / "val", val);
    out << "train tiles: " << train.size() << "\nval tiles: " << val.size() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

int gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_gradcheck_suite(a.seed, a.instances);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = true;
    out << "op\tinstances\tmax_rel_error\ttolerance\tresult\n";
    char line[256];
    for (const auto& r : results) {
      std::snprintf(line, sizeof line, "%s\t%d\t%.3e\t%.0e\t%s\n", r.name.c_str(), r.instances, r.max_error,
                    r.tolerance, r.passed() ? "PASS" : "FAIL");
      out << line;
      ok = ok && r.passed();
    }
    std::snprintf(line, sizeof line, "%.1f s\n", secs);
    out << line;
    return ok ? kOk : kNumericalAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

}  // namespace slc::cli
