#include <doctest.h>

#include <cmath>
#include <set>

#include "smart_rar/normal.hpp"
#include "smart_rar/rng.hpp"

using namespace smart_rar;

TEST_CASE("same seed reproduces the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams do not collide with the parent or each other") {
  Rng root(7);
  Rng c1 = root.derive(1);
  Rng c2 = root.derive(2);
  std::set<std::uint64_t> seen;
  Rng parent = root;
  for (int i = 0; i < 50; ++i) {
    seen.insert(parent.next_u64());
    seen.insert(c1.next_u64());
    seen.insert(c2.next_u64());
  }
  CHECK(seen.size() == 150);
}

TEST_CASE("derivation is order-stable") {
  Rng root(99);
  Rng a = root.derive(3, 5);
  Rng b = root.derive(3).derive(5);
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("u01 stays inside the open unit interval") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.u01();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal quantile matches reference values") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.644854).epsilon(1e-6));
  CHECK(normal_quantile(0.05) == doctest::Approx(-1.644854).epsilon(1e-6));
  for (double p : {0.001, 0.01, 0.1, 0.3, 0.7, 0.9, 0.99, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
  }
}

TEST_CASE("normal draws have the right first two moments") {
  Rng rng(2024);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.013);  // 4 sigma band
  CHECK(var > 0.98);
  CHECK(var < 1.02);
}

TEST_CASE("categorical follows the given probabilities") {
  Rng rng(5);
  Eigen::VectorXd p(3);
  p << 0.2, 0.5, 0.3;
  int counts[3] = {0, 0, 0};
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[rng.categorical(p)];
  CHECK(std::abs(counts[0] / double(n) - 0.2) < 0.01);
  CHECK(std::abs(counts[1] / double(n) - 0.5) < 0.01);
  CHECK(std::abs(counts[2] / double(n) - 0.3) < 0.01);
}

TEST_CASE("uniform_int covers its range") {
  Rng rng(9);
  std::set<int> seen;
  for (int i = 0; i < 1000; ++i) {
    const int k = rng.uniform_int(24);
    CHECK(k >= 0);
    CHECK(k < 24);
    seen.insert(k);
  }
  CHECK(seen.size() == 24);
}
