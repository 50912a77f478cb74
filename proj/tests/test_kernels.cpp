#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "opatt/kernels.hpp"

using namespace opatt::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

using Kernel = void (*)(std::size_t, std::size_t, std::size_t, std::span<const double>, std::span<const double>,
                        std::span<double>);

void compare(Kernel ref, Kernel fast) {
  std::mt19937_64 rng(11);
  const std::size_t shapes[][3] = {{1, 1, 1}, {7, 1, 13}, {300, 1, 300}, {5, 9, 1}, {64, 33, 17}, {130, 70, 90}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    auto c0 = random_vec(m * n, rng);
    auto c1 = c0;
    ref(m, n, k, a, b, c0);
    fast(m, n, k, a, b, c1);
    for (std::size_t i = 0; i < c0.size(); ++i) CHECK(c1[i] == doctest::Approx(c0[i]).epsilon(1e-12));
  }
}

}  // namespace

TEST_CASE("parallel gemm_nn matches the serial reference") {
  compare(serial::gemm_nn<double>, parallel::gemm_nn<double>);
}

TEST_CASE("parallel gemm_nt matches the serial reference") {
  compare(serial::gemm_nt<double>, parallel::gemm_nt<double>);
}

TEST_CASE("parallel gemm_tn matches the serial reference") {
  compare(serial::gemm_tn<double>, parallel::gemm_tn<double>);
}

TEST_CASE("hand product") {
  const std::vector<double> a = {1, 2, 3, 4}, b = {1, 1};
  std::vector<double> c(2, 0.0);
  parallel::gemm_nn<double>(2, 1, 2, a, b, c);
  CHECK(c == std::vector<double>{3, 7});
}

TEST_CASE("results do not depend on the thread count") {
  std::mt19937_64 rng(5);
  const std::size_t m = 256, n = 64, k = 256;
  const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), bt = random_vec(n * k, rng);
  const int saved = omp_get_max_threads();
  std::vector<std::vector<double>> out;
  for (int threads : {1, 3, 4}) {
    omp_set_num_threads(threads);
    std::vector<double> c1(m * n), c2(m * n), c3(m * n);
    parallel::gemm_nn<double>(m, n, k, a, b, c1);
    parallel::gemm_nt<double>(m, n, k, a, bt, c2);
    parallel::gemm_tn<double>(m, n, k, a, b, c3);
    c1.insert(c1.end(), c2.begin(), c2.end());
    c1.insert(c1.end(), c3.begin(), c3.end());
    out.push_back(std::move(c1));
  }
  omp_set_num_threads(saved);
  CHECK(out[0] == out[1]);
  CHECK(out[0] == out[2]);
}

TEST_CASE("NaN propagates through zero weights") {
  const std::vector<double> a = {0.0, 0.0}, b = {std::nan(""), 1.0};
  std::vector<double> c(1, 0.0);
  parallel::gemm_nn<double>(1, 1, 2, a, b, c);
  CHECK(std::isnan(c[0]));
}
