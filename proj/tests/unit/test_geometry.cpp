#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "repdisp/error.hpp"
#include "repdisp/geometry.hpp"
#include "repdisp/parallel.hpp"
#include "support.hpp"

using namespace repdisp;
using doctest::Approx;

TEST_CASE("normalize_rows") {
  const auto n = normalize_rows(EmbeddingMatrix::from_rows({{3, 4}}));
  CHECK(n(0, 0) == Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == Approx(0.8).epsilon(1e-15));

  try {
    normalize_rows(EmbeddingMatrix::from_rows({{1, 1}, {0, 0}}));
    FAIL("expected degenerate row");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::degenerate);
    CHECK(std::string(e.what()).find('1') != std::string::npos);
  }

  std::mt19937_64 rng(3);
  const auto m = testsupport::to_embedding(testsupport::float_rows(rng, 100, 16));
  const auto u = normalize_rows(m);
  for (std::size_t i = 0; i < u.rows(); ++i) {
    double ss = 0.0;
    for (double v : u.row(i)) ss += v * v;
    CHECK(std::abs(std::sqrt(ss) - 1.0) <= 1e-9);
  }
}

TEST_CASE("cosine dispersion hand examples, both methods") {
  for (Method method : {Method::exact, Method::closed_form}) {
    CAPTURE(to_string(method));
    const auto r = mean_pairwise_cosine_distance(EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {-1, 0}}), method);
    CHECK(r.value == Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(r.metric == Metric::cosine);
    CHECK(r.method == method);
    CHECK(r.n_rows == 3);
    CHECK_FALSE(r.seed.has_value());
    CHECK_FALSE(r.std_across_seeds.has_value());

    const auto same = mean_pairwise_cosine_distance(EmbeddingMatrix::from_rows({{1, 2}, {1, 2}, {1, 2}}), method);
    CHECK(std::abs(same.value) <= 1e-12);

    const auto anti = mean_pairwise_cosine_distance(EmbeddingMatrix::from_rows({{1, 0}, {-1, 0}}), method);
    CHECK(anti.value == Approx(2.0).epsilon(1e-14));

    CHECK_THROWS_AS(mean_pairwise_cosine_distance(EmbeddingMatrix::from_rows({{1, 0}}), method), Error);
    CHECK_THROWS_AS(mean_pairwise_cosine_distance(EmbeddingMatrix::from_rows({{1, 0}, {0, 0}}), method), Error);
  }
}

TEST_CASE("cosine dispersion matches the pair-loop oracle and stays in range") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> nd(2, 60), dd(1, 12);
  for (int t = 0; t < 200; ++t) {
    const auto rows = testsupport::float_rows(rng, nd(rng), dd(rng));
    const auto m = testsupport::to_embedding(rows);
    const double ref = oracle::mean_pairwise_cosine(rows);
    const double exact = mean_pairwise_cosine_distance(m, Method::exact).value;
    const double closed = mean_pairwise_cosine_distance(m, Method::closed_form).value;
    CHECK(std::abs(exact - ref) <= 1e-12 * std::max(1.0, ref));
    CHECK(std::abs(closed - ref) <= 1e-10 * std::max(1.0, ref));
    CHECK(closed >= 0.0);
    CHECK(closed <= 2.0);
  }
}

TEST_CASE("cosine dispersion is scale and permutation invariant") {
  std::mt19937_64 rng(5);
  auto rows = testsupport::float_rows(rng, 30, 7);
  const double base = mean_pairwise_cosine_distance(testsupport::to_matrix(rows), Method::exact).value;

  auto scaled = rows;
  std::uniform_real_distribution<double> c(0.25, 8.0);
  for (auto& r : scaled) {
    // powers of two keep the scaling exact
    const double f = std::exp2(std::round(std::log2(c(rng))));
    for (double& v : r) v *= f;
  }
  CHECK(mean_pairwise_cosine_distance(testsupport::to_matrix(scaled), Method::exact).value ==
        Approx(base).epsilon(1e-12));

  auto shuffled = rows;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(mean_pairwise_cosine_distance(testsupport::to_matrix(shuffled), Method::exact).value ==
        Approx(base).epsilon(1e-12));
  CHECK(mean_pairwise_cosine_distance(testsupport::to_matrix(shuffled), Method::closed_form).value ==
        Approx(base).epsilon(1e-10));
}

TEST_CASE("Euclidean dispersion") {
  auto r = mean_pairwise_euclidean_distance(RowSet(EmbeddingMatrix::from_rows({{0, 0}, {3, 4}})), std::nullopt, 0);
  CHECK(r.value == 5.0);
  CHECK(r.method == Method::exact);

  r = mean_pairwise_euclidean_distance(RowSet(EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {-1, 0}})), std::nullopt, 0);
  CHECK(r.value == Approx((2 * std::sqrt(2.0) + 2.0) / 3.0).epsilon(1e-14));

  CHECK_THROWS_AS(
      mean_pairwise_euclidean_distance(RowSet(EmbeddingMatrix::from_rows({{0, 0}, {3, 4}})), std::uint64_t{0}, 0),
      Error);
  CHECK_THROWS_AS(mean_pairwise_euclidean_distance(RowSet(EmbeddingMatrix::from_rows({{0, 0}})), std::nullopt, 0),
                  Error);
}

TEST_CASE("Euclidean subsampling with a sufficient budget equals the exact mean") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::size_t> nd(2, 40), dd(1, 8);
  for (int t = 0; t < 50; ++t) {
    const auto rows = testsupport::float_rows(rng, nd(rng), dd(rng));
    const auto m = testsupport::to_embedding(rows);
    const std::uint64_t pairs = rows.size() * (rows.size() - 1) / 2;
    const auto r = mean_pairwise_euclidean_distance(RowSet(m), pairs + t, 99);
    CHECK(r.value == Approx(oracle::mean_pairwise_euclidean(rows)).epsilon(1e-12));
    CHECK(r.method == Method::exact);
  }
}

TEST_CASE("Euclidean subsampling records its seed and budget and is seed-deterministic") {
  std::mt19937_64 rng(17);
  const auto rows = testsupport::float_rows(rng, 200, 6);
  const auto m = testsupport::to_embedding(rows);
  const auto a = mean_pairwise_euclidean_distance(RowSet(m), std::uint64_t{5000}, 42);
  const auto b = mean_pairwise_euclidean_distance(RowSet(m), std::uint64_t{5000}, 42);
  const auto c = mean_pairwise_euclidean_distance(RowSet(m), std::uint64_t{5000}, 43);
  CHECK(a.method == Method::pair_subsample);
  CHECK(a.seed == 42u);
  CHECK(a.pair_budget == 5000u);
  CHECK(a.value == b.value);
  CHECK(a.value != c.value);
  // an unbiased estimate of the exact mean
  const double exact = oracle::mean_pairwise_euclidean(rows);
  CHECK(std::abs(a.value - exact) < 0.05 * exact);
}

TEST_CASE("centroid") {
  const auto m = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {4, 6}});
  const std::vector<std::size_t> both{0, 1};
  CHECK(centroid(m, both) == std::vector<double>{0.5, 0.5});
  const std::vector<std::size_t> one{2};
  CHECK(centroid(m, one) == std::vector<double>{4.0, 6.0});
  CHECK_THROWS_AS(centroid(m, std::vector<std::size_t>{}), Error);
  CHECK_THROWS_AS(centroid(m, std::vector<std::size_t>{3}), Error);

  std::mt19937_64 rng(19);
  const auto rows = testsupport::float_rows(rng, 10, 5);
  const auto em = testsupport::to_embedding(rows);
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  const auto c = centroid(em, all);
  const auto ref = oracle::mean_row(rows);
  for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(c[k] - ref[k]) <= 1e-12);
}

TEST_CASE("within-cluster distance") {
  const auto m = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {-1, 0}, {2, 2}, {2, 2}});
  CHECK(within_cluster_distance(m, std::vector<std::size_t>{0, 1}) == Approx(1.0 - std::sqrt(0.5)).epsilon(1e-14));
  CHECK(std::abs(within_cluster_distance(m, std::vector<std::size_t>{3, 4})) <= 1e-12);
  try {
    within_cluster_distance(m, std::vector<std::size_t>{0, 2});
    FAIL("expected degenerate centroid");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::degenerate);
  }
  CHECK_THROWS_AS(within_cluster_distance(m, std::vector<std::size_t>{0}), Error);
}

TEST_CASE("normalized centroid mode differs from raw on unequal norms") {
  const auto m = EmbeddingMatrix::from_rows({{10, 0}, {0, 1}});
  const std::vector<std::size_t> both{0, 1};
  const double raw = within_cluster_distance(m, both, CentroidMode::raw);
  const double unit = within_cluster_distance(m, both, CentroidMode::normalized);
  CHECK(unit == Approx(1.0 - std::sqrt(0.5)).epsilon(1e-14));
  CHECK(raw != Approx(unit));
}

TEST_CASE("between-cluster distance") {
  const auto m = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}});
  CHECK(between_cluster_distance(m, {{"a", {0}}, {"b", {1}}}) == Approx(1.0).epsilon(1e-15));
  const auto m2 = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {0, 1}, {1, 0}});
  CHECK(std::abs(between_cluster_distance(m2, {{"a", {0, 1}}, {"b", {2, 3}}})) <= 1e-12);
  CHECK_THROWS_AS(between_cluster_distance(m, {{"a", {0, 1}}}), Error);
  CHECK_THROWS_AS(between_cluster_distance(m, {{"a", {0}}, {"b", {0}}}), Error);

  std::mt19937_64 rng(23);
  const auto rows = testsupport::float_rows(rng, 25, 6);
  const auto em = testsupport::to_embedding(rows);
  ClusterSet cs;
  for (std::size_t i = 0; i < 25; ++i) cs["c" + std::to_string(i % 5)].push_back(i);
  oracle::Rows centroids;
  for (const auto& [id, idx] : cs) {
    oracle::Rows members;
    for (std::size_t i : idx) members.push_back(rows[i]);
    centroids.push_back(oracle::mean_row(members));
  }
  CHECK(between_cluster_distance(em, cs) == Approx(oracle::mean_pairwise_cosine(centroids)).epsilon(1e-12));
}

TEST_CASE("set-to-set mean distance") {
  const auto a = EmbeddingMatrix::from_rows({{1, 0}});
  const auto b = EmbeddingMatrix::from_rows({{0, 1}});
  CHECK(set_to_set_mean_distance(a, b, Metric::cosine) == Approx(1.0).epsilon(1e-15));
  CHECK(set_to_set_mean_distance(a, a, Metric::euclidean) == 0.0);

  std::mt19937_64 rng(29);
  const auto ra = testsupport::float_rows(rng, 3, 5);
  const auto rb = testsupport::float_rows(rng, 4, 5);
  const auto ea = testsupport::to_embedding(ra), eb = testsupport::to_embedding(rb);
  CHECK(std::abs(set_to_set_mean_distance(ea, eb, Metric::cosine) -
                 oracle::set_to_set(ra, rb, oracle::cosine_distance)) <= 1e-12);
  CHECK(std::abs(set_to_set_mean_distance(ea, eb, Metric::euclidean) -
                 oracle::set_to_set(ra, rb, oracle::euclidean_distance)) <= 1e-12);

  CHECK_THROWS_AS(set_to_set_mean_distance(a, EmbeddingMatrix::from_rows({{0, 0}}), Metric::cosine), Error);
}

TEST_CASE("measure_dispersion dispatch rules") {
  const auto m = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {-1, 0}});
  DispersionOptions o;
  o.metric = Metric::cosine;
  o.method = Method::pair_subsample;
  CHECK_THROWS_AS(measure_dispersion(RowSet(m), o), Error);
  o.metric = Metric::euclidean;
  o.method = Method::closed_form;
  CHECK_THROWS_AS(measure_dispersion(RowSet(m), o), Error);
  o.method = Method::exact;
  CHECK(measure_dispersion(RowSet(m), o).value == Approx((2 * std::sqrt(2.0) + 2.0) / 3.0));
}

TEST_CASE("results do not depend on the worker count") {
  std::mt19937_64 rng(31);
  const auto m = testsupport::to_embedding(testsupport::float_rows(rng, 300, 9));
  std::vector<double> values;
  for (std::size_t w : {1, 2, 3, 8}) {
    set_worker_count(w);
    values.push_back(mean_pairwise_cosine_distance(m, Method::exact).value);
    values.push_back(mean_pairwise_euclidean_distance(RowSet(m), std::uint64_t{10000}, 5).value);
  }
  set_worker_count(std::nullopt);
  for (std::size_t i = 2; i < values.size(); ++i) CHECK(values[i] == values[i % 2]);
}

TEST_CASE("metric and method names round trip") {
  for (Metric m : {Metric::cosine, Metric::euclidean}) CHECK(parse_metric(to_string(m)) == m);
  for (Method m : {Method::exact, Method::closed_form, Method::pair_subsample}) CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_metric("manhattan"), Error);
}
