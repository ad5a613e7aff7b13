// Command-line front end: gen-data, train, eval, kfold, predict, ensemble,
// gradcheck, report.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vaut/pipeline.hpp"

namespace fs = std::filesystem;
using namespace vaut;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string data_dir;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides train.seed and data.seed");
  cmd->add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
}

void add_data(CLI::App* cmd, Common& c) {
  cmd->add_option("--data", c.data_dir, "dataset directory (default: <out-dir>/dataset)");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.data.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

fs::path data_dir(const Common& c) { return c.data_dir.empty() ? fs::path(c.out_dir) / "dataset" : fs::path(c.data_dir); }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Dataset pick_split(const Dataset& all, const RunConfig& cfg, const std::string& split) {
  if (split == "all") return all;
  auto [train, val] = split_by_video(all, cfg.train.val_fraction, cfg.train.seed);
  return split == "train" ? train : val;
}

void print_scores(const std::string& label, const PerAUScores& s) {
  std::printf("%s macro_f1 = %.4f\n", label.c_str(), s.macro());
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    std::printf("  %-5s %.4f%s\n", kAUNames[a], s.f1[a], s.defined[a] ? "" : "  (undefined)");
  }
}

std::string scores_kv(const std::string& prefix, const PerAUScores& s) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s.macro_f1 = %.17g\n", prefix.c_str(), s.macro());
  out += buf;
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    std::snprintf(buf, sizeof buf, "%s.%s.f1 = %.17g\n", prefix.c_str(), kAUNames[a], s.f1[a]);
    out += buf;
  }
  return out;
}

void write_predictions(const fs::path& dir, const Video& v, const Tensor<float>& probs, double threshold) {
  write_file(dir / (v.id + ".csv"), label_csv(binarize(probs, threshold)));
}

int cmd_gen_data(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  const fs::path dir = data_dir(c);
  const Dataset ds = generate_synthetic(cfg.data);
  write_dataset(ds, dir);
  std::printf("wrote %zu videos (%zu frames) to %s\n", ds.videos.size(), ds.total_frames(), dir.c_str());
  return 0;
}

int cmd_train(const Common& c) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out(c.out_dir);
  const auto [train, val] = split_by_video(load_dataset(data_dir(c)), cfg.train.val_fraction, cfg.train.seed);
  Rng init(cfg.train.seed);
  AUDetector<float> model(cfg.model, init);
  TrainOptions opts;
  opts.val = &val;
  opts.checkpoint_dir = out / "checkpoints";
  opts.on_step = [](const HistoryRow& r) {
    if (r.macro_f1) std::printf("step %zu loss %.5f lr %.5g val_macro_f1 %.4f\n", r.step, r.loss, r.lr, *r.macro_f1);
  };
  const auto history = train_loop(model, train, cfg, opts);
  write_file(out / "history.csv", history_csv(history));
  write_file(out / "config.txt", serialize_config(cfg));
  save_checkpoint(out / "model.ckpt", model, cfg);
  const PerAUScores tr = evaluate({&model}, train, cfg.train.seq_len, cfg.eval.threshold);
  const PerAUScores va = evaluate({&model}, val, cfg.train.seq_len, cfg.eval.threshold);
  std::printf("train macro_f1 = %.4f\nval macro_f1 = %.4f\nmodel written to %s\n", tr.macro(), va.macro(),
              (out / "model.ckpt").c_str());
  return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& split) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = pick_split(load_dataset(data_dir(c)), ck.config, split);
  const PerAUScores s = evaluate({ck.model.get()}, ds, ck.config.train.seq_len, ck.config.eval.threshold);
  print_scores(split, s);
  write_file(fs::path(c.out_dir) / "eval.kv", scores_kv(split, s));
  return 0;
}

int cmd_kfold(const Common& c, std::optional<std::size_t> k, std::size_t jobs) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out(c.out_dir);
  const auto [pool, val] = split_by_video(load_dataset(data_dir(c)), cfg.train.val_fraction, cfg.train.seed);
  const KFoldOutcome result = kfold_run(pool, &val, cfg, k.value_or(cfg.eval.k), out / "folds", jobs);
  const std::string table = render_report(result.report, literature_rows());
  write_file(out / "report.txt", table);
  write_file(out / "report.kv", report_key_values(result.report));
  std::fputs(table.c_str(), stdout);
  for (const auto& f : result.report.folds) {
    if (!f.macro_f1) return 1;
  }
  return 0;
}

int cmd_predict(const Common& c, const std::string& checkpoint, const std::string& split) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = pick_split(load_dataset(data_dir(c)), ck.config, split);
  const fs::path dir = fs::path(c.out_dir) / "predictions";
  for (const auto& v : ds.videos) {
    write_predictions(dir, v, predict_video(*ck.model, v, ck.config.train.seq_len), ck.config.eval.threshold);
  }
  std::printf("wrote %zu prediction files to %s\n", ds.videos.size(), dir.c_str());
  return 0;
}

int cmd_ensemble(const Common& c, const std::vector<std::string>& checkpoints, const std::string& split) {
  std::vector<LoadedCheckpoint> loaded;
  for (const auto& path : checkpoints) loaded.push_back(load_checkpoint(path));
  std::vector<const AUDetector<float>*> members;
  for (const auto& ck : loaded) members.push_back(ck.model.get());
  const RunConfig& cfg = loaded.front().config;
  const Dataset ds = pick_split(load_dataset(data_dir(c)), cfg, split);
  const fs::path dir = fs::path(c.out_dir) / "ensemble_predictions";
  std::vector<AULabelFrame> preds;
  std::vector<AULabelFrame> labels;
  for (const auto& v : ds.videos) {
    const Tensor<float> probs = ensemble_predict_video(members, v, cfg.train.seq_len);
    write_predictions(dir, v, probs, cfg.eval.threshold);
    const auto p = binarize(probs, cfg.eval.threshold);
    preds.insert(preds.end(), p.begin(), p.end());
    labels.insert(labels.end(), v.labels.begin(), v.labels.end());
  }
  const PerAUScores s = per_au_f1(preds, labels);
  print_scores("ensemble (" + std::to_string(members.size()) + " models, " + split + ")", s);
  write_file(fs::path(c.out_dir) / "ensemble.kv", scores_kv("ensemble", s));
  return 0;
}

int cmd_gradcheck(std::optional<std::uint64_t> seed) {
  const auto results = run_gradcheck_suite(seed.value_or(0));
  bool ok = true;
  std::printf("%-20s %-12s %-10s %s\n", "op", "max_rel_err", "tolerance", "status");
  for (const auto& r : results) {
    std::printf("%-20s %-12.3e %-10.0e %s\n", r.name.c_str(), r.error, r.tolerance, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

int cmd_report(const Common& c, const std::string& input, bool literature) {
  const fs::path path = input.empty() ? fs::path(c.out_dir) / "report.kv" : fs::path(input);
  const FoldReport report = parse_report_key_values(read_file(path), path.string());
  std::fputs(render_report(report, literature ? literature_rows() : std::vector<ComparisonRow>{}).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-level facial action unit detection on video clips"};
  app.require_subcommand(1);
  Common c;
  std::string checkpoint;
  std::vector<std::string> checkpoints;
  std::string split = "val";
  std::string input;
  std::optional<std::size_t> k;
  std::size_t jobs = 1;
  bool no_literature = false;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset");
  add_common(gen, c);
  add_data(gen, c);

  auto* train = app.add_subcommand("train", "train one model on the training split");
  add_common(train, c);
  add_data(train, c);

  const auto split_opt = [&](CLI::App* cmd) {
    cmd->add_option("--split", split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}))
        ->capture_default_str();
  };
  auto* eval = app.add_subcommand("eval", "score a checkpoint");
  add_common(eval, c);
  add_data(eval, c);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  split_opt(eval);

  auto* kfold = app.add_subcommand("kfold", "k-fold training plus ensemble scoring on the validation split");
  add_common(kfold, c);
  add_data(kfold, c);
  kfold->add_option("--k", k, "number of folds (default: eval.k)")->check(CLI::Range(2, 1000));
  kfold->add_option("--jobs", jobs, "concurrent folds when train.deterministic = false")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "write per-frame predictions");
  add_common(predict, c);
  add_data(predict, c);
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  split_opt(predict);

  auto* ensemble = app.add_subcommand("ensemble", "average several checkpoints");
  add_common(ensemble, c);
  add_data(ensemble, c);
  ensemble->add_option("--checkpoints", checkpoints, "member checkpoints")->required()->check(CLI::ExistingFile);
  split_opt(ensemble);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gradcheck, c);

  auto* report = app.add_subcommand("report", "render a k-fold report");
  add_common(report, c);
  report->add_option("--input", input, "report.kv (default: <out-dir>/report.kv)");
  report->add_flag("--no-literature", no_literature, "omit cited comparison rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(c);
    if (*train) return cmd_train(c);
    if (*eval) return cmd_eval(c, checkpoint, split);
    if (*kfold) return cmd_kfold(c, k, jobs);
    if (*predict) return cmd_predict(c, checkpoint, split);
    if (*ensemble) return cmd_ensemble(c, checkpoints, split);
    if (*gradcheck) return cmd_gradcheck(c.seed);
    if (*report) return cmd_report(c, input, !no_literature);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
