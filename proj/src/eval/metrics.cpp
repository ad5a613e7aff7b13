#include "vaut/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "vaut/random.hpp"

namespace vaut {

void check_label_frame(const AULabelFrame& frame, bool allow_unknown) {
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    const int v = frame[a];
    if (v == 0 || v == 1 || (allow_unknown && v == -1)) continue;
    throw UsageError(std::string("invalid code ") + std::to_string(v) + " for " + kAUNames[a] +
                     (allow_unknown ? " (expected 0, 1 or -1)" : " (expected 0 or 1)"));
  }
}

namespace {

template <FloatElement T>
std::size_t frames_of(const Tensor<T>& t, const char* what) {
  if (t.rank() < 1 || t.dim(t.rank() - 1) != kNumAUs) {
    throw DimensionError(std::string(what) + " must end in an axis of 12, got " + shape_str(t.shape()));
  }
  return t.numel() / kNumAUs;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

template <FloatElement T>
std::vector<AULabelFrame> binarize(const Tensor<T>& probabilities, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw UsageError("threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  const std::size_t n = frames_of(probabilities, "probabilities");
  std::vector<AULabelFrame> out(n);
  const auto p = probabilities.values();
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      out[f][a] = static_cast<double>(p[f * kNumAUs + a]) >= threshold ? 1 : 0;
    }
  }
  return out;
}

template <FloatElement T>
std::vector<AULabelFrame> to_label_frames(const Tensor<T>& labels) {
  const std::size_t n = frames_of(labels, "labels");
  std::vector<AULabelFrame> out(n);
  const auto v = labels.values();
  for (std::size_t f = 0; f < n; ++f) {
    for (std::size_t a = 0; a < kNumAUs; ++a) out[f][a] = static_cast<std::int8_t>(v[f * kNumAUs + a]);
    check_label_frame(out[f], true);
  }
  return out;
}

double PerAUScores::macro() const {
  double total = 0.0;
  for (double v : f1) total += v;
  return total / static_cast<double>(kNumAUs);
}

PerAUScores per_au_f1(const std::vector<AULabelFrame>& predictions, const std::vector<AULabelFrame>& labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("predictions have " + std::to_string(predictions.size()) + " frames, labels " +
                         std::to_string(labels.size()));
  }
  PerAUScores s;
  for (std::size_t f = 0; f < labels.size(); ++f) {
    check_label_frame(predictions[f], false);
    check_label_frame(labels[f], true);
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      const int y = labels[f][a];
      if (y < 0) continue;
      auto& c = s.counts[a];
      const bool p = predictions[f][a] == 1;
      if (p && y == 1) ++c.tp;
      else if (p) ++c.fp;
      else if (y == 1) ++c.fn;
      else ++c.tn;
    }
  }
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    const auto& c = s.counts[a];
    const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
    s.defined[a] = denom > 0;
    s.f1[a] = denom > 0 ? static_cast<double>(2 * c.tp) / static_cast<double>(denom) : 0.0;
  }
  return s;
}

double macro_f1(const std::vector<AULabelFrame>& predictions, const std::vector<AULabelFrame>& labels) {
  return per_au_f1(predictions, labels).macro();
}

std::vector<Fold> kfold_split(const std::vector<std::string>& video_ids, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2, got " + std::to_string(k));
  if (video_ids.size() < k) {
    throw ConfigError("k-fold with k=" + std::to_string(k) + " needs at least that many videos, got " +
                      std::to_string(video_ids.size()));
  }
  if (std::set<std::string>(video_ids.begin(), video_ids.end()).size() != video_ids.size()) {
    throw ConfigError("k-fold: duplicate video ids");
  }
  std::vector<std::string> order = video_ids;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].val.push_back(order[i]);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].val.begin(), folds[g].val.end());
    }
  }
  return folds;
}

std::vector<ComparisonRow> literature_rows() {
  return {{"Baseline (literature)", 0.39}, {"ViViT + RegNetY ensemble (literature)", 0.5398}};
}

std::string render_report(const FoldReport& report, const std::vector<ComparisonRow>& comparison) {
  std::size_t width = std::string("Val Set").size();
  for (const auto& f : report.folds) width = std::max(width, f.id.size());
  for (const auto& r : comparison) width = std::max(width, r.label.size());
  const auto row = [&](const std::string& label, const std::string& value) {
    std::string line = label;
    line.resize(width, ' ');
    return line + " | " + value + "\n";
  };
  const std::string rule = std::string(width, '-') + "-+-" + std::string(8, '-') + "\n";

  std::string out = row("Fold", "F1 Score") + rule;
  for (const auto& f : report.folds) {
    out += row(f.id, f.macro_f1 ? format_score(*f.macro_f1) : "failed: " + f.error);
  }
  if (report.val_score) out += row("Val Set", format_score(*report.val_score));
  if (report.val_per_au) {
    out += "\nPer-AU F1 (Val Set)\n";
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      out += std::string("  ") + kAUNames[a];
      out.resize(out.size() + (6 - std::string(kAUNames[a]).size()), ' ');
      out += format_score(report.val_per_au->f1[a]);
      if (!report.val_per_au->defined[a]) out += "  (undefined: no positives)";
      out += "\n";
    }
  }
  if (!comparison.empty()) {
    out += "\nCited results (not recomputed)\n" + rule;
    for (const auto& r : comparison) out += row(r.label, format_score(r.value));
  }
  return out;
}

std::string report_key_values(const FoldReport& report) {
  std::ostringstream out;
  out << "folds = " << report.folds.size() << "\n";
  for (std::size_t i = 0; i < report.folds.size(); ++i) {
    const auto& f = report.folds[i];
    const std::string key = "fold." + std::to_string(i + 1);
    out << key << ".id = " << f.id << "\n";
    if (f.macro_f1) {
      out << key << ".macro_f1 = " << format_exact(*f.macro_f1) << "\n";
    } else {
      out << key << ".error = " << f.error << "\n";
    }
  }
  if (report.val_score) out << "val.macro_f1 = " << format_exact(*report.val_score) << "\n";
  if (report.val_per_au) {
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      out << "val." << kAUNames[a] << ".f1 = " << format_exact(report.val_per_au->f1[a]) << "\n";
      out << "val." << kAUNames[a] << ".defined = " << (report.val_per_au->defined[a] ? 1 : 0) << "\n";
    }
  }
  return out.str();
}

FoldReport parse_report_key_values(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError(source + ":" + std::to_string(row) + ": expected 'key = value'");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const auto number = [&](const std::string& key) {
    try {
      return std::stod(kv.at(key));
    } catch (const std::exception&) {
      throw ParseError(source + ": missing or non-numeric '" + key + "'");
    }
  };
  FoldReport report;
  const auto n = static_cast<std::size_t>(number("folds"));
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string key = "fold." + std::to_string(i);
    FoldScore f{kv.count(key + ".id") ? kv[key + ".id"] : std::to_string(i), std::nullopt, ""};
    if (kv.count(key + ".macro_f1")) {
      f.macro_f1 = number(key + ".macro_f1");
    } else {
      f.error = kv.count(key + ".error") ? kv[key + ".error"] : "missing";
    }
    report.folds.push_back(f);
  }
  if (kv.count("val.macro_f1")) report.val_score = number("val.macro_f1");
  if (kv.count(std::string("val.") + kAUNames[0] + ".f1")) {
    PerAUScores s;
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      s.f1[a] = number(std::string("val.") + kAUNames[a] + ".f1");
      s.defined[a] = number(std::string("val.") + kAUNames[a] + ".defined") != 0.0;
    }
    report.val_per_au = s;
  }
  return report;
}

std::string label_csv(const std::vector<AULabelFrame>& frames) {
  std::string out = "frame";
  for (const char* name : kAUNames) out += std::string(",") + name;
  out += "\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    out += std::to_string(f);
    for (auto v : frames[f]) out += "," + std::to_string(static_cast<int>(v));
    out += "\n";
  }
  return out;
}

std::vector<AULabelFrame> parse_label_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  const std::string header = label_csv({});
  if (!std::getline(in, line) || line + "\n" != header) {
    throw ParseError(source + ":1: expected header '" + header.substr(0, header.size() - 1) + "'");
  }
  std::vector<AULabelFrame> frames;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fail = [&](const std::string& why) {
      return ParseError(source + ":" + std::to_string(row) + ": " + why);
    };
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(fields, cell, ',')) cells.push_back(cell);
    if (cells.size() != kNumAUs + 1) {
      throw fail("expected 13 columns, got " + std::to_string(cells.size()));
    }
    if (cells[0] != std::to_string(frames.size())) throw fail("frame index '" + cells[0] + "' out of sequence");
    AULabelFrame frame{};
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      const std::string& c = cells[a + 1];
      if (c == "0") frame[a] = 0;
      else if (c == "1") frame[a] = 1;
      else if (c == "-1") frame[a] = -1;
      else throw fail(std::string("invalid value '") + c + "' for " + kAUNames[a]);
    }
    frames.push_back(frame);
  }
  return frames;
}

template std::vector<AULabelFrame> binarize<float>(const Tensor<float>&, double);
template std::vector<AULabelFrame> binarize<double>(const Tensor<double>&, double);
template std::vector<AULabelFrame> to_label_frames<float>(const Tensor<float>&);
template std::vector<AULabelFrame> to_label_frames<double>(const Tensor<double>&);

}  // namespace vaut
