#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eldm/data_model.hpp"
#include "test_support.hpp"

using namespace eldm;
using eldm::testing::LogCapture;

namespace {

StateMatrix column_matrix(std::initializer_list<double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return StateMatrix(m, {{"x", ColumnRole::generic}});
}

}  // namespace

TEST(LoadStateMatrix, ParsesThreeRows) {
  const std::string csv = "T,Y_H2\n300,0.1\n400,0.2\n500,0.3\n";
  const auto x = load_state_matrix(csv, {{"T", ColumnRole::temperature}, {"Y_H2", ColumnRole::species}});
  EXPECT_EQ(x.rows(), 3);
  EXPECT_EQ(x.cols(), 2);
  EXPECT_EQ(x.columns()[1].role, ColumnRole::species);
  EXPECT_DOUBLE_EQ(x.values()(2, 0), 500.0);
  EXPECT_DOUBLE_EQ(x.values()(1, 1), 0.2);
}

TEST(LoadStateMatrix, NonNumericCellNamesRowAndColumn) {
  const std::string csv = "T,Y_H2\n300,0.1\n400,abc\n";
  try {
    load_state_matrix(csv, {});
    FAIL() << "expected a parse error";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("abc"), std::string::npos);
    EXPECT_NE(what.find("row 3"), std::string::npos);
    EXPECT_NE(what.find("Y_H2"), std::string::npos);
  }
}

TEST(LoadStateMatrix, ClampsTinySpeciesOvershootWithWarning) {
  LogCapture log;
  const std::string csv = "T,Y\n300,1.0000000001\n400,0.5\n";
  const auto x = load_state_matrix(csv, {{"Y", ColumnRole::species}});
  EXPECT_EQ(x.values()(0, 1), 1.0);
  EXPECT_TRUE(log.contains("clamping"));
}

TEST(LoadStateMatrix, RejectsLargeSpeciesViolation) {
  EXPECT_THROW(load_state_matrix("Y\n1.1\n0.5\n", {{"Y", ColumnRole::species}}), DataError);
  EXPECT_THROW(load_state_matrix("Y\n-0.01\n0.5\n", {{"Y", ColumnRole::species}}), DataError);
}

TEST(LoadStateMatrix, StructuralErrors) {
  EXPECT_THROW(load_state_matrix("", {}), DataError);
  EXPECT_THROW(load_state_matrix("a,b\n1,2\n3\n", {}), DataError);
  EXPECT_THROW(load_state_matrix("a,b\n1,2\n3,4\n", {{"c", ColumnRole::generic}}), DataError);
  EXPECT_THROW(load_state_matrix("a\n1\n", {}), DataError);  // N < 2
}

TEST(LoadStateMatrix, DelimiterAndRowIds) {
  LoadOptions opt;
  opt.delimiter = ';';
  opt.row_id_column = "cell";
  const auto x = load_state_matrix("cell;T\nc1;300\nc2;310\n", {}, opt);
  EXPECT_EQ(x.cols(), 1);
  ASSERT_EQ(x.row_ids().size(), 2u);
  EXPECT_EQ(x.row_ids()[1], "c2");
}

TEST(LoadStateMatrix, WriteThenLoadIsExact) {
  std::mt19937_64 rng(3);
  const Matrix m = eldm::testing::random_matrix(7, 3, rng);
  std::ostringstream out;
  write_delimited(out, {"a", "b", "c"}, m);
  const auto x = load_state_matrix(out.str(), {});
  EXPECT_EQ(x.values(), m);
}

TEST(FitPreprocessor, AutoUsesSampleStandardDeviation) {
  const auto p = fit_preprocessor(column_matrix({1, 2, 3}), Scaling::autoscale, true);
  EXPECT_DOUBLE_EQ(p.centers(0), 2.0);
  EXPECT_DOUBLE_EQ(p.scales(0), 1.0);
}

TEST(FitPreprocessor, RangeScale) {
  const auto p = fit_preprocessor(column_matrix({0, 5, 10}), Scaling::range, true);
  EXPECT_DOUBLE_EQ(p.centers(0), 5.0);
  EXPECT_DOUBLE_EQ(p.scales(0), 10.0);
}

TEST(FitPreprocessor, ParetoAndVast) {
  // column [1, 2, 3]: sigma = 1, mean = 2
  const auto x = column_matrix({1, 2, 3});
  EXPECT_DOUBLE_EQ(fit_preprocessor(x, Scaling::pareto, true).scales(0), 1.0);
  EXPECT_DOUBLE_EQ(fit_preprocessor(x, Scaling::vast, true).scales(0), 0.5);
  // column [2, 4, 6, 8]: sigma^2 = 20/3, sqrt(sigma) = (20/3)^(1/4)
  const auto y = column_matrix({2, 4, 6, 8});
  EXPECT_NEAR(fit_preprocessor(y, Scaling::pareto, true).scales(0), std::pow(20.0 / 3.0, 0.25), 1e-15);
  EXPECT_NEAR(fit_preprocessor(y, Scaling::vast, true).scales(0), (20.0 / 3.0) / 5.0, 1e-15);
}

TEST(FitPreprocessor, ConstantColumnGetsUnitScaleAndWarning) {
  LogCapture log;
  const auto p = fit_preprocessor(column_matrix({4, 4, 4}), Scaling::autoscale, true);
  EXPECT_EQ(p.scales(0), 1.0);
  EXPECT_TRUE(log.contains("zero scale"));
}

TEST(FitPreprocessor, VastRejectsZeroMean) {
  EXPECT_THROW(fit_preprocessor(column_matrix({-1, 0, 1}), Scaling::vast, true), DataError);
}

TEST(FitPreprocessor, UncenteredKeepsZeroCenters) {
  const auto p = fit_preprocessor(column_matrix({1, 2, 3}), Scaling::range, false);
  EXPECT_EQ(p.centers(0), 0.0);
  EXPECT_FALSE(p.centered());
}

TEST(ApplyPreprocessor, CenteredAuto) {
  const auto x = column_matrix({1, 2, 3});
  const Matrix xt = apply_preprocessor(x, fit_preprocessor(x, Scaling::autoscale, true));
  EXPECT_DOUBLE_EQ(xt(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(xt(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(xt(2, 0), 1.0);
}

TEST(ApplyPreprocessor, UncenteredScaleTwo) {
  Preprocessor p{RowVector::Zero(1), RowVector::Constant(1, 2.0), Scaling::none, Centering::none};
  Matrix x(2, 1);
  x << 2, 4;
  const Matrix xt = apply_preprocessor(x, p);
  EXPECT_DOUBLE_EQ(xt(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(xt(1, 0), 2.0);
}

TEST(ApplyPreprocessor, IdentityAndMismatch) {
  std::mt19937_64 rng(1);
  const Matrix x = eldm::testing::random_matrix(4, 3, rng);
  const auto id = Preprocessor::identity(3);
  EXPECT_EQ(apply_preprocessor(x, id), x);
  EXPECT_EQ(invert_preprocessor(x, id), x);
  EXPECT_THROW(apply_preprocessor(x, Preprocessor::identity(2)), ConfigError);
  EXPECT_THROW(invert_preprocessor(x, Preprocessor::identity(2)), ConfigError);
}

TEST(InvertPreprocessor, RestoresCenterAndScale) {
  Preprocessor p{RowVector::Constant(1, 2.0), RowVector::Ones(1), Scaling::autoscale, Centering::mean};
  Matrix xt(3, 1);
  xt << -1, 0, 1;
  const Matrix x = invert_preprocessor(xt, p);
  EXPECT_DOUBLE_EQ(x(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(x(2, 0), 3.0);
}

// Round trip, unit variance, and unit range hold for random data under every method.
TEST(PreprocessorProperties, RandomMatrices) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = eldm::testing::random_matrix(20, 5, rng);
    m.array() += 3.0;  // keep means away from zero for vast
    m.col(1) *= 1000.0;
    for (Scaling s : {Scaling::none, Scaling::autoscale, Scaling::pareto, Scaling::range, Scaling::vast}) {
      const auto p = fit_preprocessor(m, s, Centering::mean);
      const Matrix back = invert_preprocessor(apply_preprocessor(m, p), p);
      for (Index i = 0; i < m.size(); ++i) {
        EXPECT_NEAR(back.data()[i], m.data()[i], 1e-12 * std::max(1.0, std::abs(m.data()[i])));
      }
    }
    const Matrix a = apply_preprocessor(m, fit_preprocessor(m, Scaling::autoscale, Centering::mean));
    const RowVector sd = column_stddev(a);
    for (Index j = 0; j < sd.size(); ++j) EXPECT_NEAR(sd(j) * sd(j), 1.0, 1e-10);
    const Matrix r = apply_preprocessor(m, fit_preprocessor(m, Scaling::range, Centering::mean));
    for (Index j = 0; j < r.cols(); ++j) EXPECT_NEAR(r.col(j).maxCoeff() - r.col(j).minCoeff(), 1.0, 1e-12);
  }
}

TEST(FitPreprocessor, MinimumCenteringIsNonnegative) {
  std::mt19937_64 rng(5);
  const Matrix m = eldm::testing::random_matrix(30, 4, rng);
  const Matrix xt = apply_preprocessor(m, fit_preprocessor(m, Scaling::range, Centering::minimum));
  EXPECT_GE(xt.minCoeff(), 0.0);
  EXPECT_NEAR(xt.maxCoeff(), 1.0, 1e-12);
}

namespace {

StateMatrix two_species(double yf, double yo) {
  Matrix m(2, 2);
  m << yf, yo, 0.0, 0.232;
  return StateMatrix(m, {{"F", ColumnRole::species}, {"O2", ColumnRole::species}});
}

StreamDefinition streams(double nu, double yf1, double yo2) {
  StreamDefinition s;
  s.nu = nu;
  s.yf_fuel_stream = yf1;
  s.yo2_ox_stream = yo2;
  s.fuel_columns = {"F"};
  s.oxidizer_column = "O2";
  return s;
}

}  // namespace

TEST(MixtureFraction, StreamEndpoints) {
  const auto s = streams(8.0, 1.0, 0.232);
  const Vector z = mixture_fraction(two_species(1.0, 0.0), s);
  EXPECT_NEAR(z(0), 1.0, 1e-15);
  EXPECT_NEAR(z(1), 0.0, 1e-15);
}

TEST(MixtureFraction, WorkedExample) {
  const Vector z = mixture_fraction(two_species(0.05, 0.1), streams(8.0, 1.0, 0.232));
  EXPECT_NEAR(z(0), (0.4 - 0.1 + 0.232) / 8.232, 1e-15);
  EXPECT_NEAR(z(0), 0.0646, 1e-4);
}

TEST(MixtureFraction, SumsMultipleFuelColumns) {
  Matrix m(2, 3);
  m << 0.02, 0.03, 0.1, 0.0, 0.0, 0.232;
  const StateMatrix x(m, {{"H2", ColumnRole::species}, {"CO", ColumnRole::species}, {"O2", ColumnRole::species}});
  auto s = streams(8.0, 1.0, 0.232);
  s.fuel_columns = {"H2", "CO"};
  EXPECT_NEAR(mixture_fraction(x, s)(0), (0.4 - 0.1 + 0.232) / 8.232, 1e-15);
}

TEST(MixtureFraction, AffineInComposition) {
  const auto s = streams(3.5, 0.9, 0.232);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const double f1 = u(rng), o1 = u(rng), f2 = u(rng), o2 = u(rng), w = u(rng) * 2.0;
    const double mixed = mixture_fraction(w * f1 + (1 - w) * f2, w * o1 + (1 - w) * o2, s);
    const double blend = w * mixture_fraction(f1, o1, s) + (1 - w) * mixture_fraction(f2, o2, s);
    EXPECT_NEAR(mixed, blend, 1e-12);
  }
}

TEST(MixtureFraction, MissingColumnAndBadStream) {
  auto s = streams(8.0, 1.0, 0.232);
  s.oxidizer_column = "nope";
  EXPECT_THROW(mixture_fraction(two_species(0.1, 0.1), s), DataError);
  EXPECT_THROW(mixture_fraction(two_species(0.1, 0.1), streams(8.0, 0.0, 0.232)), ConfigError);
}

TEST(Damkohler, Ratios) {
  EXPECT_EQ(damkohler({1.0, 1.0}), 1.0);
  EXPECT_EQ(damkohler({10.0, 1.0}), 10.0);
  EXPECT_THROW(damkohler({1.0, 0.0}), ConfigError);
  EXPECT_THROW(damkohler({-1.0, 1.0}), ConfigError);
}

TEST(StateMatrix, Invariants) {
  Matrix bad(2, 1);
  bad << 1.0, std::nan("");
  EXPECT_THROW(StateMatrix(bad, {{"x", ColumnRole::generic}}), DataError);
  Matrix out(2, 1);
  out << 0.5, 1.5;
  EXPECT_THROW(StateMatrix(out, {{"y", ColumnRole::species}}), DataError);
  EXPECT_NO_THROW(StateMatrix(out, {{"y", ColumnRole::generic}}));
}
