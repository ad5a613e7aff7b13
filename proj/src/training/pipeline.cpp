#include "vaut/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace vaut {

namespace fs = std::filesystem;

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out = "step,loss,lr,macro_f1\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,", r.step, r.loss, r.lr);
    out += buf;
    if (r.macro_f1) {
      std::snprintf(buf, sizeof buf, "%.6f", *r.macro_f1);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::vector<HistoryRow> train_loop(AUDetector<float>& model, const Dataset& train, const RunConfig& config,
                                   const TrainOptions& options) {
  config.validate();
  const auto& tc = config.train;
  const std::vector<Clip> clips = load_and_chunk(train, tc.seq_len);
  if (clips.empty()) throw UsageError("training set is empty");

  Sgd<float> sgd(model.parameters(), config.optimizer);
  CosineWarmRestarts schedule(config.scheduler.eta_min, config.eta_max(), config.scheduler.t_0,
                              config.scheduler.t_mult);
  Rng rng(tc.seed);
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = std::min(tc.batch_size, clips.size());
  std::size_t cursor = clips.size();

  const Dataset& scored = options.val ? *options.val : train;
  std::vector<HistoryRow> history;
  for (std::size_t step = 1; step <= tc.max_steps; ++step) {
    if (cursor + batch > clips.size()) {
      rng.shuffle(order);
      cursor = 0;
    }
    const ClipBatch b = make_batch(clips, {order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                           order.begin() + static_cast<std::ptrdiff_t>(cursor + batch)});
    cursor += batch;

    HistoryRow row{step, 0.0, schedule.next(), std::nullopt};
    const Tensor<float> loss = focal_loss(model.forward(b.frames), b.labels, config.focal);
    row.loss = loss.item();
    if (!std::isfinite(row.loss)) {
      Tape<float>::current().clear();
      throw NumericError("non-finite loss " + std::to_string(row.loss) + " at step " + std::to_string(step));
    }
    backward(loss);
    sgd.step(row.lr);

    const bool eval_point = step == tc.max_steps || (tc.eval_every > 0 && step % tc.eval_every == 0);
    if (eval_point) {
      row.macro_f1 = evaluate({&model}, scored, tc.seq_len, config.eval.threshold).macro();
      if (!options.checkpoint_dir.empty()) {
        save_checkpoint(options.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt"), model, config);
      }
    }
    history.push_back(row);
    if (options.on_step) options.on_step(row);
  }
  return history;
}

namespace {

constexpr std::size_t kInferenceBatch = 4;

// Sigmoid probabilities for each clip, [seq_len, 12] apiece.
std::vector<Tensor<float>> clip_probabilities(const AUDetector<float>& model, const std::vector<Clip>& clips) {
  NoGradGuard no_grad;
  std::vector<Tensor<float>> out;
  for (std::size_t start = 0; start < clips.size(); start += kInferenceBatch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(clips.size(), start + kInferenceBatch); ++i) idx.push_back(i);
    const Tensor<float> probs = sigmoid(model.forward(make_batch(clips, idx).frames));
    const std::size_t per_clip = probs.numel() / idx.size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::vector<float> part(probs.values().begin() + static_cast<std::ptrdiff_t>(i * per_clip),
                              probs.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * per_clip));
      out.emplace_back(Shape{per_clip / kNumAUs, kNumAUs}, std::move(part));
    }
  }
  return out;
}

Tensor<float> stitch(const std::vector<Clip>& clips, const std::vector<Tensor<float>>& probs, std::size_t frames) {
  Tensor<float> out({frames, kNumAUs}, 0.0f);
  auto ov = out.mutable_values();
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto src = probs[c].values();
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(clips[c].n_real * kNumAUs),
              ov.begin() + static_cast<std::ptrdiff_t>(clips[c].offset * kNumAUs));
  }
  return out;
}

}  // namespace

Tensor<float> predict_video(const AUDetector<float>& model, const Video& video, std::size_t seq_len) {
  const auto clips = chunk_video(video, seq_len);
  return stitch(clips, clip_probabilities(model, clips), video.length());
}

Tensor<float> ensemble_predict(const std::vector<const AUDetector<float>*>& models, const Tensor<float>& clip) {
  if (models.empty()) throw UsageError("ensemble needs at least one model");
  if (clip.rank() != 4) throw DimensionError("ensemble expects a clip [T,3,H,W], got " + shape_str(clip.shape()));
  NoGradGuard no_grad;
  Shape batched = clip.shape();
  batched.insert(batched.begin(), 1);
  const Tensor<float> input = reshape(clip, batched);
  std::vector<Tensor<float>> members;
  for (const auto* m : models) members.push_back(reshape(sigmoid(m->forward(input)), {clip.dim(0), kNumAUs}));
  return order_invariant_mean(members);
}

Tensor<float> ensemble_predict_video(const std::vector<const AUDetector<float>*>& models, const Video& video,
                                     std::size_t seq_len) {
  if (models.empty()) throw UsageError("ensemble needs at least one model");
  std::vector<Tensor<float>> members;
  for (const auto* m : models) members.push_back(predict_video(*m, video, seq_len));
  return order_invariant_mean(members);
}

PerAUScores evaluate(const std::vector<const AUDetector<float>*>& models, const Dataset& dataset,
                     std::size_t seq_len, double threshold) {
  std::vector<AULabelFrame> preds;
  std::vector<AULabelFrame> labels;
  for (const auto& v : dataset.videos) {
    const auto p = binarize(ensemble_predict_video(models, v, seq_len), threshold);
    preds.insert(preds.end(), p.begin(), p.end());
    labels.insert(labels.end(), v.labels.begin(), v.labels.end());
  }
  return per_au_f1(preds, labels);
}

KFoldOutcome kfold_run(const Dataset& pool, const Dataset* val, const RunConfig& config, std::size_t k,
                       const fs::path& out_dir, std::size_t workers) {
  const auto folds = kfold_split(pool.ids(), k, config.train.seed);
  KFoldOutcome outcome;
  outcome.report.folds.resize(k);
  outcome.models.resize(k);

  const auto run_fold = [&](std::size_t f) {
    FoldScore& score = outcome.report.folds[f];
    score.id = std::to_string(f + 1);
    try {
      Rng init(config.train.seed);
      auto model = std::make_unique<AUDetector<float>>(config.model, init);
      const Dataset train = pool.subset(folds[f].train);
      const Dataset held_out = pool.subset(folds[f].val);
      TrainOptions opts;
      opts.val = &held_out;
      const auto history = train_loop(*model, train, config, opts);
      score.macro_f1 = history.back().macro_f1;
      if (!out_dir.empty()) {
        const fs::path dir = out_dir / ("fold_" + score.id);
        save_checkpoint(dir / "model.ckpt", *model, config);
        std::ofstream(dir / "history.csv") << history_csv(history);
      }
      outcome.models[f] = std::move(model);
    } catch (const std::exception& e) {
      Tape<float>::current().clear();
      score.macro_f1.reset();
      score.error = e.what();
    }
  };

  const std::size_t n_workers = config.train.deterministic ? 1 : std::max<std::size_t>(1, workers);
  if (n_workers == 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool_threads;
    for (std::size_t w = 0; w < std::min(n_workers, k); ++w) {
      pool_threads.emplace_back([&] {
        for (std::size_t f = next++; f < k; f = next++) run_fold(f);
      });
    }
    for (auto& t : pool_threads) t.join();
  }

  if (val && !val->videos.empty()) {
    std::vector<const AUDetector<float>*> members;
    for (const auto& m : outcome.models) {
      if (m) members.push_back(m.get());
    }
    if (!members.empty()) {
      const PerAUScores s = evaluate(members, *val, config.train.seq_len, config.eval.threshold);
      outcome.report.val_score = s.macro();
      outcome.report.val_per_au = s;
    }
  }
  return outcome;
}

}  // namespace vaut
