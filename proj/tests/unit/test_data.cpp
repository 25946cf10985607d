#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace sparsetab;

namespace {

// Plug-in mutual information between a column discretized into quartiles
// and the class labels.
double binned_mi(const std::vector<double>& col, const std::vector<int>& y, std::size_t classes) {
  std::vector<double> sorted = col;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = col.size();
  const double q[3] = {sorted[n / 4], sorted[n / 2], sorted[3 * n / 4]};
  std::vector<std::vector<double>> joint(4, std::vector<double>(classes, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bin = (col[i] > q[0]) + (col[i] > q[1]) + (col[i] > q[2]);
    joint[bin][static_cast<std::size_t>(y[i])] += 1.0 / static_cast<double>(n);
  }
  std::vector<double> pb(4, 0.0), pc(classes, 0.0);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t c = 0; c < classes; ++c) {
      pb[b] += joint[b][c];
      pc[c] += joint[b][c];
    }
  double mi = 0.0;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t c = 0; c < classes; ++c)
      if (joint[b][c] > 0) mi += joint[b][c] * std::log(joint[b][c] / (pb[b] * pc[c]));
  return mi;
}

// Permutation p-value of the column/label mutual information.
double mi_p_value(const std::vector<double>& col, std::vector<int> y, std::size_t classes, Rng& rng) {
  const double observed = binned_mi(col, y, classes);
  std::size_t at_least = 0;
  for (int s = 0; s < 1000; ++s) {
    rng.shuffle(y);
    at_least += binned_mi(col, y, classes) >= observed;
  }
  return static_cast<double>(at_least + 1) / 1001.0;
}

}  // namespace

TEST(Csv, SplitLineHandlesQuotes) {
  const auto f = csv::split_line(R"(a,"b,c","d""e",)");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "d\"e");
  EXPECT_EQ(f[3], "");
}

TEST(Csv, FormatDoubleRoundTrips) {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = r.normal(0, 1e5) * std::pow(10.0, static_cast<double>(r.below(20)) - 10);
    EXPECT_EQ(*csv::parse_double(csv::format_double(v)), v);
  }
  EXPECT_FALSE(csv::parse_double("1.5x").has_value());
  EXPECT_FALSE(csv::parse_double("").has_value());
}

TEST(Dataset, LoadCsvSeparatesRoles) {
  TempDir dir;
  const auto path = dir.write("d.csv", "# note: ignored\na,b,label\n1,2,0\n3,4,1\n\n5,6,1\n");
  CsvColumns cols;
  cols.label = "label";
  const Dataset d = load_csv(path, cols);
  EXPECT_EQ(d.n_rows(), 3u);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(*d.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(d.x(2, 1), 6.0);
}

TEST(Dataset, LoadCsvErrorsNameTheRow) {
  TempDir dir;
  try {
    load_csv(dir.write("bad.csv", "a,b\n1,2\n3,oops\n"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_THROW(load_csv(dir.write("ragged.csv", "a,b\n1\n")), ParseError);
  CsvColumns cols;
  cols.label = "y";
  EXPECT_THROW(load_csv(dir.write("nolabel.csv", "a\n1\n"), cols), ParseError);
  EXPECT_THROW(load_csv(dir.file("missing.csv")), IoError);
}

TEST(Dataset, SurvivalCsvRoundTrip) {
  TempDir dir;
  SurvivalSpec spec;
  spec.n_samples = 40;
  const Dataset d = make_survival(spec).data;
  write_csv(d, dir.file("s.csv"));
  CsvColumns cols;
  cols.time = "time";
  cols.event = "event";
  const Dataset back = load_csv(dir.file("s.csv"), cols);
  EXPECT_EQ(back.x, d.x);
  EXPECT_EQ(back.survival->time, d.survival->time);
  EXPECT_EQ(back.survival->event, d.survival->event);
}

TEST(Dataset, ValidateRejectsBadSurvival) {
  Dataset d;
  d.x = Matrix(2, 1);
  d.feature_names = {"a"};
  d.survival = SurvivalColumns{{1.0, -1.0}, {1, 0}};
  EXPECT_THROW(d.validate(), InvalidArgument);
  d.survival = SurvivalColumns{{1.0, 1.0}, {1, 2}};
  EXPECT_THROW(d.validate(), InvalidArgument);
}

TEST(Dataset, StandardizeGivesZeroMeanUnitVariance) {
  SyntheticSpec spec;
  spec.n_samples = 200;
  spec.n_features = 8;
  spec.n_informative = 3;
  Dataset d = make_classification(spec).data;
  for (std::size_t i = 0; i < d.n_rows(); ++i) d.x(i, 5) = 4.0;  // constant column
  const auto [z, p] = standardize(d);
  for (std::size_t j = 0; j < z.n_features(); ++j) {
    const auto c = z.x.col(j);
    double m = 0, v = 0;
    for (double x : c) m += x;
    m /= static_cast<double>(c.size());
    for (double x : c) v += (x - m) * (x - m);
    v /= static_cast<double>(c.size());
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, j == 5 ? 0.0 : 1.0, 1e-12);
  }
  EXPECT_EQ(p.std[5], 1.0);
  EXPECT_EQ(apply_scaler(d, p).x, z.x);
}

TEST(Dataset, SplitIsStratifiedDeterministicAndDisjoint) {
  SyntheticSpec spec;
  spec.n_samples = 600;
  const Dataset d = make_classification(spec).data;
  const Split a = split(d, 0.2, 9), b = split(d, 0.2, 9), c = split(d, 0.2, 10);
  EXPECT_EQ(a.test_rows, b.test_rows);
  EXPECT_NE(a.test_rows, c.test_rows);
  EXPECT_EQ(a.test_rows.size(), 120u);
  std::set<std::size_t> all(a.train_rows.begin(), a.train_rows.end());
  for (auto r : a.test_rows) EXPECT_TRUE(all.insert(r).second);
  EXPECT_EQ(all.size(), 600u);
  std::vector<int> per_class(6, 0);
  for (int y : *a.test.labels) ++per_class[static_cast<std::size_t>(y)];
  for (int n : per_class) EXPECT_EQ(n, 20);
}

TEST(Dataset, SplitRejectsBadFraction) {
  SyntheticSpec spec;
  spec.n_samples = 50;
  const Dataset d = make_classification(spec).data;
  EXPECT_THROW(split(d, 0.0, 1), InvalidArgument);
  EXPECT_THROW(split(d, 1.0, 1), InvalidArgument);
}

TEST(Dataset, SelectAndDropFeatures) {
  SyntheticSpec spec;
  spec.n_samples = 20;
  spec.n_features = 6;
  spec.n_informative = 3;
  const Dataset d = make_classification(spec).data;
  const std::vector<std::size_t> drop{1, 4};
  const Dataset r = d.drop_features(drop);
  EXPECT_EQ(r.feature_names, (std::vector<std::string>{"f0", "f2", "f3", "f5"}));
  EXPECT_EQ(r.x(3, 1), d.x(3, 2));
  EXPECT_EQ(*r.labels, *d.labels);
}

TEST(Synthetic, ShapeBalanceAndDeterminism) {
  SyntheticSpec spec;
  spec.seed = 4;
  const SyntheticData a = make_classification(spec), b = make_classification(spec);
  EXPECT_EQ(a.data.x, b.data.x);
  EXPECT_EQ(a.informative, b.informative);
  EXPECT_EQ(a.data.n_rows(), 1000u);
  EXPECT_EQ(a.data.n_features(), 100u);
  EXPECT_EQ(a.informative.size(), 10u);
  std::vector<int> counts(6, 0);
  for (int y : *a.data.labels) ++counts[static_cast<std::size_t>(y)];
  for (int c : counts) EXPECT_GE(c, 166);
}

TEST(Synthetic, RejectsImpossibleSpecs) {
  SyntheticSpec spec;
  spec.n_informative = 2;
  spec.n_classes = 5;
  EXPECT_THROW(make_classification(spec), InvalidArgument);
  spec = {};
  spec.n_informative = 101;
  EXPECT_THROW(make_classification(spec), InvalidArgument);
}

TEST(Synthetic, InformativeColumnsSeparateClassesNoiseDoesNot) {
  // Least-squares one-vs-rest fit on a column subset, scored on training rows.
  SyntheticSpec spec;
  spec.seed = 5;
  const SyntheticData s = make_classification(spec);
  std::vector<std::size_t> noise;
  for (std::size_t j = 0; j < 100; ++j)
    if (!std::binary_search(s.informative.begin(), s.informative.end(), j)) noise.push_back(j);
  noise.resize(10);
  auto ls_accuracy = [&](const std::vector<std::size_t>& cols) {
    const std::size_t n = s.data.n_rows(), p = cols.size() + 1;
    Matrix xtx(p, p), xty(p, 6);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row{1.0};
      for (auto c : cols) row.push_back(s.data.x(i, c));
      for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b < p; ++b) xtx(a, b) += row[a] * row[b];
        xty(a, static_cast<std::size_t>((*s.data.labels)[i])) += row[a];
      }
    }
    // Gauss-Jordan solve of xtx * beta = xty.
    for (std::size_t c = 0; c < p; ++c) {
      const double piv = xtx(c, c);
      for (std::size_t k = 0; k < p; ++k) xtx(c, k) /= piv;
      for (std::size_t k = 0; k < 6; ++k) xty(c, k) /= piv;
      for (std::size_t r = 0; r < p; ++r) {
        if (r == c) continue;
        const double f = xtx(r, c);
        for (std::size_t k = 0; k < p; ++k) xtx(r, k) -= f * xtx(c, k);
        for (std::size_t k = 0; k < 6; ++k) xty(r, k) -= f * xty(c, k);
      }
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> score(6, 0.0);
      for (std::size_t k = 0; k < 6; ++k) {
        score[k] = xty(0, k);
        for (std::size_t a = 0; a < cols.size(); ++a) score[k] += xty(a + 1, k) * s.data.x(i, cols[a]);
      }
      hit += static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin()) ==
             (*s.data.labels)[i];
    }
    return static_cast<double>(hit) / static_cast<double>(n);
  };
  EXPECT_GT(ls_accuracy(s.informative), 0.6);
  EXPECT_LT(ls_accuracy(noise), 0.25);
}

TEST(Synthetic, NoiseColumnsCarryNoLabelInformation) {
  SyntheticSpec spec;
  spec.seed = 6;
  spec.n_samples = 600;
  spec.n_features = 40;
  const SyntheticData s = make_classification(spec);
  Rng rng(7);
  std::size_t noise_hits = 0, noise_total = 0;
  for (std::size_t j = 0; j < spec.n_features; ++j) {
    const double pv = mi_p_value(s.data.x.col(j), *s.data.labels, 6, rng);
    const bool informative = std::binary_search(s.informative.begin(), s.informative.end(), j);
    if (informative) {
      EXPECT_LT(pv, 0.01) << "column " << j;
    } else {
      ++noise_total;
      noise_hits += pv < 0.01;
    }
  }
  // At alpha = 0.01 over 30 null columns, two or more rejections has
  // probability below 4%.
  EXPECT_LE(noise_hits, 1u) << "of " << noise_total;
}

TEST(Synthetic, SurvivalRiskIsLinearInBeta) {
  SurvivalSpec spec;
  spec.seed = 8;
  const SurvivalData s = make_survival(spec);
  for (std::size_t i = 0; i < 10; ++i) {
    double eta = 0;
    for (std::size_t j = 0; j < spec.n_features; ++j) eta += s.data.x(i, j) * s.beta[j];
    EXPECT_NEAR(s.true_risk[i], eta, 1e-12);
  }
  for (std::size_t j = spec.n_informative; j < spec.n_features; ++j) EXPECT_EQ(s.beta[j], 0.0);
  double events = 0;
  for (int e : s.data.survival->event) events += e;
  EXPECT_NEAR(events / 500.0, 0.8, 0.06);
  EXPECT_GT(concordance_index(s.true_risk, s.data.survival->time, s.data.survival->event), 0.75);
}
