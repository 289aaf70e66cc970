#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "uvs/uvm_head.hpp"

using namespace uvs;

namespace {

UvmHead random_head(int d, int m, Rng& rng) {
  UvmHead h = UvmHead::init({d, m, 1.0, 1.0}, rng.next_u64());
  for (int i = 0; i < d; ++i) h.mean_weights[i] = rng.normal();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j) h.posterior_matrix(i, j) = 0.5 * rng.normal();
  return h;
}

Representation random_rep(int d, Rng& rng) {
  Representation x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("sample_index: zero point returns the zero vector") {
  Rng rng(1);
  const IndexVector z = sample_index(IndexDistribution::zero_point(3), rng);
  CHECK(z.size() == 3);
  CHECK(z.isZero(0.0));
}

TEST_CASE("sample_index: signed coordinates are uniform over the 2m vectors") {
  Rng rng(2);
  const int m = 2;
  const auto dist = IndexDistribution::coordinate_signed(m);
  const int n = 100000;
  // Bucket by (position, sign).
  int counts[4] = {0, 0, 0, 0};
  for (int k = 0; k < n; ++k) {
    const IndexVector z = sample_index(dist, rng);
    int nz = -1;
    for (int i = 0; i < m; ++i)
      if (z[i] != 0.0) {
        CHECK(nz == -1);
        nz = i;
      }
    REQUIRE(nz >= 0);
    CHECK(std::abs(z[nz]) == 1.0);
    counts[nz + (z[nz] < 0 ? m : 0)] += 1;
  }
  for (int c : counts)
    CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 0.01);
}

TEST_CASE("sample_index: gaussian coordinates have near-zero mean") {
  Rng rng(3);
  const int m = 2;
  const auto dist = IndexDistribution::gaussian(m);
  const int n = 100000;
  double sum[2] = {0.0, 0.0};
  for (int k = 0; k < n; ++k) {
    const IndexVector z = sample_index(dist, rng);
    sum[0] += z[0];
    sum[1] += z[1];
  }
  CHECK(std::abs(sum[0] / n) < 0.02);
  CHECK(std::abs(sum[1] / n) < 0.02);
}

TEST_CASE("posterior_value: hand-computed 1x1 case") {
  UvmHead h = UvmHead::init({1, 1, 1.0, 1.0}, 7);
  h.mean_weights[0] = 0.5;
  h.posterior_matrix(0, 0) = 0.2;
  h.prior_matrix(0, 0) = 0.1;
  Representation x(1);
  x[0] = 1.0;
  IndexVector z(1);
  z[0] = 2.0;
  CHECK(posterior_value(h, x, z) == doctest::Approx(1.1).epsilon(1e-12));
  z[0] = -2.0;
  CHECK(posterior_value(h, x, z) == doctest::Approx(-0.1).epsilon(1e-12));
  // The two signed draws average back to the mean.
  z[0] = 2.0;
  const double up = posterior_value(h, x, z);
  z[0] = -2.0;
  const double dn = posterior_value(h, x, z);
  CHECK((up + dn) / 2.0 == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("posterior_value: zero index equals mean_value exactly") {
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const int d = 1 + rng.uniform_int(8);
    const int m = 1 + rng.uniform_int(6);
    const UvmHead h = random_head(d, m, rng);
    const Representation x = random_rep(d, rng);
    CHECK(posterior_value(h, x, IndexVector::Zero(m)) == mean_value(h, x));
  }
}

TEST_CASE("posterior_value: rejects non-finite input and bad shapes") {
  Rng rng(12);
  const UvmHead h = random_head(3, 2, rng);
  Representation x = random_rep(3, rng);
  IndexVector z = IndexVector::Zero(2);
  CHECK_THROWS_AS(posterior_value(h, random_rep(4, rng), z),
                  std::invalid_argument);
  CHECK_THROWS_AS(posterior_value(h, x, IndexVector::Zero(3)),
                  std::invalid_argument);
  x[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(posterior_value(h, x, z), std::invalid_argument);
  x[1] = 0.0;
  z[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(posterior_value(h, x, z), std::invalid_argument);
}

TEST_CASE("mean_value: zero weights and hand dot product") {
  Rng rng(13);
  UvmHead h = random_head(2, 2, rng);
  h.mean_weights.setZero();
  CHECK(mean_value(h, random_rep(2, rng)) == 0.0);
  h.mean_weights[0] = 0.3;
  h.mean_weights[1] = -0.1;
  Representation x(2);
  x[0] = 1.0;
  x[1] = 2.0;
  CHECK(mean_value(h, x) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("coordinate-average identity over the 2m signed one-hots") {
  Rng rng(14);
  for (int rep = 0; rep < 200; ++rep) {
    const int d = 1 + rng.uniform_int(6);
    const int m = 1 + rng.uniform_int(5);
    const UvmHead h = random_head(d, m, rng);
    const Representation x = random_rep(d, rng);
    double acc = 0.0;
    for (int i = 0; i < 2 * m; ++i)
      acc += posterior_value(h, x, signed_coordinate(m, i));
    acc /= 2 * m;
    const double mean = mean_value(h, x);
    CHECK(std::abs(acc - mean) <= 1e-10 * std::max(1.0, std::abs(mean)));
  }
}

TEST_CASE("sample_posterior_values: zero-variance head repeats the mean") {
  Rng rng(15);
  UvmHead h = random_head(3, 2, rng);
  h.posterior_matrix.setZero();
  h.prior_matrix.setZero();
  const Representation x = random_rep(3, rng);
  const auto values = sample_posterior_values(h, x, 17, rng);
  CHECK(values.size() == 17);
  for (double v : values) CHECK(v == mean_value(h, x));
}

TEST_CASE("sample_posterior_values: n=1 equals one gaussian-index draw") {
  Rng rng(151);
  const UvmHead h = random_head(4, 3, rng);
  const Representation x = random_rep(4, rng);
  Rng r1(9), r2(9);
  const auto values = sample_posterior_values(h, x, 1, r1);
  REQUIRE(values.size() == 1);
  const IndexVector z = sample_index(IndexDistribution::gaussian(3), r2);
  CHECK(values[0] == doctest::Approx(posterior_value(h, x, z)).epsilon(1e-12));
}

TEST_CASE("defaults follow the reference configuration") {
  CHECK(UvmHeadConfig{}.m == 10);
  CHECK(UvmHeadConfig{}.posterior_scale == 1.0);
  CHECK(UvmHeadConfig{}.prior_scale == 1.0);
}

TEST_CASE("sample_posterior_values: matches closed-form variance") {
  Rng rng(16);
  const int d = 4, m = 3;
  const UvmHead h = random_head(d, m, rng);
  const Representation x = random_rep(d, rng);
  // Independent oracle: the variance of a linear map of a standard normal.
  const Eigen::MatrixXd M =
      h.posterior_scale * h.posterior_matrix + h.prior_scale * h.prior_matrix;
  const double var_closed = (M.transpose() * x).squaredNorm();
  const int n = 100000;
  const auto values = sample_posterior_values(h, x, n, rng);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n - 1;
  CHECK(std::abs(var - var_closed) < 0.03 * var_closed);
}

TEST_CASE("posterior_value: linear in the index") {
  Rng rng(17);
  const UvmHead h = random_head(5, 4, rng);
  const Representation x = random_rep(5, rng);
  const double mean = mean_value(h, x);
  IndexVector z(4);
  for (int i = 0; i < 4; ++i) z[i] = rng.normal();
  const double dev = posterior_value(h, x, z) - mean;
  for (double alpha : {-2.0, 0.5, 3.0}) {
    const double dev_scaled = posterior_value(h, x, (alpha * z).eval()) - mean;
    CHECK(dev_scaled == doctest::Approx(alpha * dev).epsilon(1e-10));
  }
}

TEST_CASE("posterior_summary: exact mean, sampled std, n >= 2 enforced") {
  Rng rng(18);
  UvmHead h = UvmHead::init({1, 1, 1.0, 1.0}, 3);
  h.posterior_matrix(0, 0) = 0.6;
  h.prior_matrix(0, 0) = 0.8;
  Representation x(1);
  x[0] = 1.0;
  CHECK_THROWS_AS(posterior_summary(h, x, 1, rng), std::invalid_argument);
  const auto s = posterior_summary(h, x, 100000, rng);
  CHECK(s.mean == mean_value(h, x));
  CHECK(s.sample_count == 100000);
  CHECK(std::abs(s.std - 1.4) < 0.03 * 1.4);

  // Mean field does not depend on the sample count.
  const auto s2 = posterior_summary(h, x, 2, rng);
  CHECK(s2.mean == s.mean);

  h.posterior_matrix.setZero();
  h.prior_matrix.setZero();
  const auto s3 = posterior_summary(h, x, 50, rng);
  CHECK(s3.std == 0.0);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(19);
  const UvmHead h = random_head(6, 4, rng);
  const std::string body = checkpoint_to_string(h);
  const UvmHead back = checkpoint_from_string(body);
  CHECK(back.d == h.d);
  CHECK(back.m == h.m);
  CHECK(back.posterior_scale == h.posterior_scale);
  CHECK(back.prior_scale == h.prior_scale);
  CHECK(back.prior_seed == h.prior_seed);
  CHECK(back.mean_weights == h.mean_weights);
  CHECK(back.posterior_matrix == h.posterior_matrix);
  CHECK(back.prior_matrix == h.prior_matrix);
  CHECK(checkpoint_to_string(back) == body);
}

TEST_CASE("prior init is reproducible from the stored seed") {
  const UvmHead a = UvmHead::init({8, 5, 1.0, 1.0}, 42);
  const UvmHead b = UvmHead::init({8, 5, 1.0, 1.0}, 42);
  CHECK(a.prior_matrix == b.prior_matrix);
  CHECK(a.posterior_matrix.isZero(0.0));
  CHECK(a.mean_weights.isZero(0.0));
  const UvmHead c = UvmHead::init({8, 5, 1.0, 1.0}, 43);
  CHECK(a.prior_matrix != c.prior_matrix);
}
