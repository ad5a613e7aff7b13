#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "vaut/metrics.hpp"
#include "vaut/random.hpp"

using namespace vaut;

namespace {

// Independent reference: F1 of one AU as an exact fraction built from
// counted (prediction, label) pair categories.
struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 0;
};

Fraction oracle_f1(const std::vector<AULabelFrame>& preds, const std::vector<AULabelFrame>& labels, std::size_t au) {
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t f = 0; f < preds.size(); ++f) pairs.emplace_back(preds[f][au], labels[f][au]);
  const auto count = [&](int p, int y) {
    return static_cast<std::uint64_t>(
        std::count_if(pairs.begin(), pairs.end(), [&](const auto& q) { return q.first == p && q.second == y; }));
  };
  const std::uint64_t tp = count(1, 1), fp = count(1, 0), fn = count(0, 1);
  return {2 * tp, 2 * tp + fp + fn};
}

double oracle_macro(const std::vector<AULabelFrame>& preds, const std::vector<AULabelFrame>& labels) {
  double total = 0.0;
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    const Fraction fr = oracle_f1(preds, labels, a);
    total += fr.den == 0 ? 0.0 : static_cast<double>(fr.num) / static_cast<double>(fr.den);
  }
  return total / 12.0;
}

AULabelFrame fill_frame(int v) {
  AULabelFrame f;
  f.fill(static_cast<std::int8_t>(v));
  return f;
}

std::pair<std::vector<AULabelFrame>, std::vector<AULabelFrame>> random_instance(Rng& rng) {
  const auto t = static_cast<std::size_t>(rng.integer(1, 40));
  const double p_unknown = rng.uniform(0.0, 0.3);
  const double p_on = rng.uniform(0.0, 1.0);
  std::vector<AULabelFrame> preds(t), labels(t);
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      preds[f][a] = static_cast<std::int8_t>(rng.bernoulli(0.5));
      labels[f][a] = rng.bernoulli(p_unknown) ? -1 : static_cast<std::int8_t>(rng.bernoulli(p_on));
    }
  }
  return {preds, labels};
}

}  // namespace

TEST(MacroF1, MatchesOracleOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [preds, labels] = random_instance(rng);
    const PerAUScores s = per_au_f1(preds, labels);
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      const Fraction fr = oracle_f1(preds, labels, a);
      ASSERT_EQ(s.defined[a], fr.den > 0);
      ASSERT_EQ(s.f1[a], fr.den == 0 ? 0.0 : static_cast<double>(fr.num) / static_cast<double>(fr.den));
    }
    ASSERT_EQ(macro_f1(preds, labels), oracle_macro(preds, labels)) << trial;
  }
}

TEST(MacroF1, MatchesOracleOnFullEnumerationSingleAU) {
  std::size_t cases = 0;
  for (std::size_t t = 1; t <= 6; ++t) {
    std::size_t label_combos = 1, pred_combos = std::size_t{1} << t;
    for (std::size_t i = 0; i < t; ++i) label_combos *= 3;
    for (std::size_t lc = 0; lc < label_combos; ++lc) {
      std::vector<AULabelFrame> labels(t, fill_frame(-1));
      std::size_t code = lc;
      for (std::size_t f = 0; f < t; ++f, code /= 3) labels[f][0] = static_cast<std::int8_t>(code % 3) - 1;
      for (std::size_t pc = 0; pc < pred_combos; ++pc) {
        std::vector<AULabelFrame> preds(t, fill_frame(0));
        for (std::size_t f = 0; f < t; ++f) preds[f][0] = static_cast<std::int8_t>((pc >> f) & 1);
        const PerAUScores s = per_au_f1(preds, labels);
        const Fraction fr = oracle_f1(preds, labels, 0);
        ASSERT_EQ(s.defined[0], fr.den > 0);
        ASSERT_EQ(s.f1[0], fr.den == 0 ? 0.0 : static_cast<double>(fr.num) / static_cast<double>(fr.den));
        ASSERT_EQ(s.macro(), oracle_macro(preds, labels));
        ++cases;
      }
    }
  }
  EXPECT_EQ(cases, 3u * 2 + 9 * 4 + 27 * 8 + 81 * 16 + 243 * 32 + 729 * 64);
}

TEST(MacroF1, SwapSymmetry) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto [preds, labels] = random_instance(rng);
    for (auto& f : labels) {
      for (auto& v : f) v = v < 0 ? 0 : v;
    }
    const PerAUScores ab = per_au_f1(preds, labels);
    const PerAUScores ba = per_au_f1(labels, preds);
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      EXPECT_EQ(ab.counts[a].fp, ba.counts[a].fn);
      EXPECT_EQ(ab.counts[a].fn, ba.counts[a].fp);
    }
    EXPECT_EQ(ab.macro(), ba.macro());
  }
}

TEST(MacroF1, FramePermutationInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    auto [preds, labels] = random_instance(rng);
    const double ref = macro_f1(preds, labels);
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<AULabelFrame> p2, l2;
    for (auto i : order) {
      p2.push_back(preds[i]);
      l2.push_back(labels[i]);
    }
    EXPECT_EQ(macro_f1(p2, l2), ref);
  }
}

TEST(MacroF1, MaskedFramesNeverCount) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto [preds, labels] = random_instance(rng);
    const PerAUScores ref = per_au_f1(preds, labels);
    for (std::size_t f = 0; f < preds.size(); ++f) {
      for (std::size_t a = 0; a < kNumAUs; ++a) {
        if (labels[f][a] < 0) preds[f][a] = static_cast<std::int8_t>(1 - preds[f][a]);
      }
    }
    const PerAUScores got = per_au_f1(preds, labels);
    EXPECT_EQ(got.f1, ref.f1);
    for (std::size_t a = 0; a < kNumAUs; ++a) {
      EXPECT_EQ(got.counts[a].tp, ref.counts[a].tp);
      EXPECT_EQ(got.counts[a].fp, ref.counts[a].fp);
      EXPECT_EQ(got.counts[a].fn, ref.counts[a].fn);
    }
  }
}

TEST(MacroF1, WorkedExamples) {
  // TP=2, FP=1, FN=1 on AU1; every other AU perfect.
  std::vector<AULabelFrame> labels{fill_frame(1), fill_frame(1), fill_frame(1), fill_frame(0)};
  std::vector<AULabelFrame> preds = labels;
  preds[2][0] = 0;
  preds[3][0] = 1;
  const PerAUScores s = per_au_f1(preds, labels);
  EXPECT_DOUBLE_EQ(s.f1[0], 4.0 / 6.0);
  EXPECT_EQ(s.f1[1], 1.0);

  EXPECT_EQ(macro_f1(labels, labels), 1.0);
  std::vector<AULabelFrame> inverted;
  for (const auto& f : labels) {
    AULabelFrame g;
    for (std::size_t a = 0; a < kNumAUs; ++a) g[a] = static_cast<std::int8_t>(1 - f[a]);
    inverted.push_back(g);
  }
  EXPECT_EQ(macro_f1(inverted, labels), 0.0);

  std::vector<AULabelFrame> half = labels;
  for (auto& f : half) {
    for (std::size_t a = 6; a < kNumAUs; ++a) f[a] = static_cast<std::int8_t>(1 - f[a]);
  }
  EXPECT_EQ(macro_f1(half, labels), 0.5);
}

TEST(MacroF1, NoPositivesIsFlaggedZero) {
  const std::vector<AULabelFrame> zeros(3, fill_frame(0));
  const PerAUScores s = per_au_f1(zeros, zeros);
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    EXPECT_FALSE(s.defined[a]);
    EXPECT_EQ(s.f1[a], 0.0);
  }
  const std::vector<AULabelFrame> unknown(3, fill_frame(-1));
  EXPECT_FALSE(per_au_f1(zeros, unknown).defined[0]);
}

TEST(MacroF1, RejectsBadInput) {
  const std::vector<AULabelFrame> two(2, fill_frame(0));
  const std::vector<AULabelFrame> three(3, fill_frame(0));
  EXPECT_THROW(macro_f1(two, three), DimensionError);
  EXPECT_THROW(macro_f1(std::vector<AULabelFrame>(2, fill_frame(-1)), two), UsageError);
  EXPECT_THROW(macro_f1(two, std::vector<AULabelFrame>(2, fill_frame(2))), UsageError);
  EXPECT_THROW(check_label_frame(fill_frame(-1), false), UsageError);
  EXPECT_NO_THROW(check_label_frame(fill_frame(-1), true));
}

TEST(Binarize, ThresholdConvention) {
  Tensor<float> p({2, kNumAUs}, 0.5f);
  for (std::size_t a = 0; a < kNumAUs; ++a) p.mutable_values()[kNumAUs + a] = 0.0f;
  const auto out = binarize(p, 0.5);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], fill_frame(1));
  EXPECT_EQ(out[1], fill_frame(0));
}

TEST(Binarize, RaisingThresholdNeverAddsPositives) {
  Rng rng(12);
  const auto p = uniform_tensor<double>({30, kNumAUs}, 0.0, 1.0, rng);
  std::vector<AULabelFrame> prev = binarize(p, 0.01);
  for (double thr = 0.05; thr < 1.0; thr += 0.05) {
    const auto cur = binarize(p, thr);
    for (std::size_t f = 0; f < cur.size(); ++f) {
      for (std::size_t a = 0; a < kNumAUs; ++a) EXPECT_LE(cur[f][a], prev[f][a]);
    }
    prev = cur;
  }
}

TEST(Binarize, ThresholdOutsideOpenIntervalIsUsageError) {
  const Tensor<float> p({1, kNumAUs}, 0.3f);
  EXPECT_THROW(binarize(p, 0.0), UsageError);
  EXPECT_THROW(binarize(p, 1.0), UsageError);
  EXPECT_THROW(binarize(p, -0.2), UsageError);
  EXPECT_THROW(binarize(Tensor<float>({4, 5}, 0.f), 0.5), DimensionError);
}

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("v" + std::to_string(i));
  return out;
}

}  // namespace

TEST(KFoldSplit, TenVideosFiveFolds) {
  const auto folds = kfold_split(ids(10), 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  std::multiset<std::string> seen;
  for (const auto& f : folds) {
    EXPECT_EQ(f.val.size(), 2u);
    EXPECT_EQ(f.train.size(), 8u);
    for (const auto& v : f.val) {
      seen.insert(v);
      EXPECT_EQ(std::count(f.train.begin(), f.train.end(), v), 0);
    }
  }
  const auto all = ids(10);
  EXPECT_EQ(seen, std::multiset<std::string>(all.begin(), all.end()));
}

TEST(KFoldSplit, SizesBalancedAndDeterministic) {
  for (std::size_t n = 3; n <= 23; ++n) {
    for (std::size_t k = 2; k <= n && k <= 7; ++k) {
      const auto folds = kfold_split(ids(n), k, 9);
      std::size_t lo = n, hi = 0, total = 0;
      for (const auto& f : folds) {
        lo = std::min(lo, f.val.size());
        hi = std::max(hi, f.val.size());
        total += f.val.size();
        EXPECT_EQ(f.val.size() + f.train.size(), n);
      }
      EXPECT_LE(hi - lo, 1u);
      EXPECT_EQ(total, n);
      const auto again = kfold_split(ids(n), k, 9);
      for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(again[i].val, folds[i].val);
    }
  }
}

TEST(KFoldSplit, Errors) {
  EXPECT_THROW(kfold_split(ids(5), 1, 0), ConfigError);
  EXPECT_THROW(kfold_split(ids(3), 4, 0), ConfigError);
  EXPECT_THROW(kfold_split({"a", "b", "a"}, 2, 0), ConfigError);
}

namespace {

FoldReport sample_report() {
  FoldReport r;
  for (int i = 1; i <= 5; ++i) r.folds.push_back({std::to_string(i), 0.5 + 0.01 * i, ""});
  r.val_score = 0.61234;
  PerAUScores s;
  for (std::size_t a = 0; a < kNumAUs; ++a) {
    s.f1[a] = 0.05 * static_cast<double>(a);
    s.defined[a] = a != 3;
  }
  r.val_per_au = s;
  return r;
}

}  // namespace

TEST(Report, FoldTableShape) {
  const std::string text = render_report(sample_report(), {});
  EXPECT_EQ(text.rfind("Fold    | F1 Score\n", 0), 0u) << text;
  for (int i = 1; i <= 5; ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "\n%-7d | %.4f\n", i, 0.5 + 0.01 * i);
    EXPECT_NE(text.find(line), std::string::npos) << line;
  }
  EXPECT_NE(text.find("\nVal Set | 0.6123\n"), std::string::npos);
  EXPECT_NE(text.find("AU6   0.1500  (undefined: no positives)"), std::string::npos);
  EXPECT_EQ(text.find("Cited"), std::string::npos);
}

TEST(Report, LiteratureRowsRenderedVerbatim) {
  const auto rows = literature_rows();
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].value, 0.39);
  EXPECT_EQ(rows[1].value, 0.5398);
  const std::string text = render_report(sample_report(), rows);
  EXPECT_NE(text.find("Cited results (not recomputed)"), std::string::npos);
  EXPECT_NE(text.find("| 0.3900\n"), std::string::npos);
  EXPECT_NE(text.find("| 0.5398\n"), std::string::npos);
}

TEST(Report, FailedFoldShowsError) {
  FoldReport r = sample_report();
  r.folds[2].macro_f1.reset();
  r.folds[2].error = "non-finite loss";
  EXPECT_NE(render_report(r, {}).find("failed: non-finite loss"), std::string::npos);
}

TEST(Report, KeyValueRoundTrip) {
  FoldReport r = sample_report();
  r.folds[4].macro_f1.reset();
  r.folds[4].error = "boom";
  const FoldReport back = parse_report_key_values(report_key_values(r), "mem");
  ASSERT_EQ(back.folds.size(), r.folds.size());
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    EXPECT_EQ(back.folds[i].id, r.folds[i].id);
    EXPECT_EQ(back.folds[i].macro_f1, r.folds[i].macro_f1);
    EXPECT_EQ(back.folds[i].error, r.folds[i].error);
  }
  EXPECT_EQ(back.val_score, r.val_score);
  ASSERT_TRUE(back.val_per_au);
  EXPECT_EQ(back.val_per_au->f1, r.val_per_au->f1);
  EXPECT_EQ(back.val_per_au->defined, r.val_per_au->defined);
  EXPECT_THROW(parse_report_key_values("folds 3\n", "r.kv"), ParseError);
  EXPECT_THROW(parse_report_key_values("x = 1\n", "r.kv"), ParseError);
}

TEST(LabelCsv, RoundTrip) {
  Rng rng(13);
  const auto [preds, labels] = random_instance(rng);
  const std::string text = label_csv(labels);
  EXPECT_EQ(text.substr(0, text.find('\n')), "frame,AU1,AU2,AU4,AU6,AU7,AU10,AU12,AU15,AU23,AU24,AU25,AU26");
  EXPECT_EQ(parse_label_csv(text, "mem"), labels);
  EXPECT_TRUE(parse_label_csv(label_csv({}), "mem").empty());
}

TEST(LabelCsv, ErrorsNameSourceAndRow) {
  const std::string header = "frame,AU1,AU2,AU4,AU6,AU7,AU10,AU12,AU15,AU23,AU24,AU25,AU26\n";
  const auto message = [](const std::string& text) {
    try {
      parse_label_csv(text, "clip.csv");
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("frame,AU1\n").find("clip.csv:1"), std::string::npos);
  EXPECT_NE(message(header + "0,1,1,1,1,1,1,1,1,1,1,1,1\n1,0,0\n").find("clip.csv:3"), std::string::npos);
  EXPECT_NE(message(header + "0,1,1,1,1,1,1,1,1,1,1,1,7\n").find("clip.csv:2"), std::string::npos);
  EXPECT_NE(message(header + "5,1,1,1,1,1,1,1,1,1,1,1,1\n").find("clip.csv:2"), std::string::npos);
}
