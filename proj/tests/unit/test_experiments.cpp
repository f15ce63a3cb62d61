#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "repdisp/error.hpp"
#include "repdisp/experiments.hpp"
#include "repdisp/parallel.hpp"
#include "repdisp/sampler.hpp"
#include "support.hpp"

using namespace repdisp;
using doctest::Approx;

namespace {

std::vector<SegmentMeta> metas_from(const std::vector<nlohmann::json>& lines) {
  std::vector<SegmentMeta> out;
  for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(parse_meta_line(lines[i].dump(), i + 1));
  return out;
}

}  // namespace

TEST_CASE("splitmix64 reference stream") {
  // First outputs for seed 0 (published splitmix64 test vector).
  SeededSampler s(0);
  CHECK(s.next_u64() == 0xE220A8397B1DCDAFULL);
  CHECK(s.next_u64() == 0x6E789E6AA1B965F4ULL);
  CHECK(s.next_u64() == 0x06C45D188009454FULL);
}

TEST_CASE("uniform_below stays in range and covers it") {
  SeededSampler s(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = s.uniform_below(7);
    REQUIRE(v < 7);
    ++hits[v];
  }
  for (int h : hits) CHECK(h > 800);
  CHECK_THROWS_AS(s.uniform_below(0), Error);
}

TEST_CASE("sample_indices") {
  SeededSampler a(42), b(42);
  const auto x = sample_indices(a, 10, 3);
  CHECK(x == sample_indices(b, 10, 3));
  CHECK(std::set<std::size_t>(x.begin(), x.end()).size() == 3);

  SeededSampler c(5);
  auto perm = sample_indices(c, 20, 20);
  std::sort(perm.begin(), perm.end());
  std::vector<std::size_t> iota(20);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(perm == iota);

  SeededSampler d(5);
  CHECK(sample_indices(d, 20, 0).empty());
  CHECK_THROWS_AS(sample_indices(d, 3, 4), Error);
}

TEST_CASE("sample_indices equals a dense partial Fisher-Yates replay") {
  for (std::uint64_t seed : {0ULL, 9ULL, 123456789ULL}) {
    for (std::size_t n : {std::size_t{50}, std::size_t{100000}, std::size_t{3000000}}) {
      const std::size_t k = 40;
      SeededSampler lib(seed), ref(seed);
      const auto got = sample_indices(lib, n, k);
      std::vector<std::size_t> pool(n);
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + ref.uniform_below(n - i);
        std::swap(pool[i], pool[j]);
      }
      CHECK(got == std::vector<std::size_t>(pool.begin(), pool.begin() + k));
      CHECK(lib.state() == ref.state());
    }
  }
}

TEST_CASE("profile_sublayers: identical sublayers give identical profiles") {
  std::mt19937_64 rng(43);
  const auto m = testsupport::to_embedding(testsupport::float_rows(rng, 60, 8));
  std::vector<SublayerInput> inputs{{"m", "attention", std::cref(m)}, {"m", "feedforward", std::cref(m)}};
  const std::vector<std::size_t> ns{10, 50};
  const auto p = profile_sublayers(inputs, ns, 4, 7);
  REQUIRE(p.size() == 4);
  CHECK(p[0].sublayer_tag == "attention");
  CHECK(p[1].sublayer_tag == "feedforward");
  CHECK(p[0].n == 10);
  CHECK(p[2].n == 50);
  CHECK(p[0].mean == p[1].mean);
  CHECK(p[0].std == p[1].std);
  CHECK(p[0].repeats == 4);
  CHECK(p[0].base_seed == 7);
}

TEST_CASE("profile_sublayers replays the documented seeds") {
  std::mt19937_64 rng(47);
  const auto rows_a = testsupport::float_rows(rng, 30, 5);
  const auto rows_f = testsupport::float_rows(rng, 30, 5);
  const auto ma = testsupport::to_embedding(rows_a), mf = testsupport::to_embedding(rows_f);
  std::vector<SublayerInput> inputs{{"m", "attention", std::cref(ma)}, {"m", "feedforward", std::cref(mf)}};
  const std::vector<std::size_t> ns{6};
  const auto p = profile_sublayers(inputs, ns, 2, 100);

  std::vector<double> att, ffn;
  for (std::uint64_t r = 0; r < 2; ++r) {
    SeededSampler s(100 + r);
    const auto idx = sample_indices(s, 30, 6);
    oracle::Rows sa, sf;
    for (auto i : idx) {
      sa.push_back(rows_a[i]);
      sf.push_back(rows_f[i]);
    }
    att.push_back(oracle::mean_pairwise_cosine(sa));
    ffn.push_back(oracle::mean_pairwise_cosine(sf));
  }
  auto mean = [](const std::vector<double>& v) { return (v[0] + v[1]) / 2.0; };
  auto sd = [](const std::vector<double>& v) { return std::abs(v[0] - v[1]) / std::sqrt(2.0); };
  CHECK(p[0].mean == Approx(mean(att)).epsilon(1e-12));
  CHECK(*p[0].std == Approx(sd(att)).epsilon(1e-9));
  CHECK(p[1].mean == Approx(mean(ffn)).epsilon(1e-12));
  CHECK(*p[1].std == Approx(sd(ffn)).epsilon(1e-9));
}

TEST_CASE("profile_sublayers validation") {
  const auto a = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const auto b = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}});
  std::vector<SublayerInput> mismatch{{"m", "attention", std::cref(a)}, {"m", "feedforward", std::cref(b)}};
  const std::vector<std::size_t> two{2};
  CHECK_THROWS_AS(profile_sublayers(mismatch, two, 2, 0), Error);
  std::vector<SublayerInput> one{{"m", "attention", std::cref(a)}};
  const std::vector<std::size_t> four{4};
  CHECK_THROWS_AS(profile_sublayers(one, four, 2, 0), Error);
  const auto single = profile_sublayers(one, two, 1, 0);
  CHECK_FALSE(single[0].std.has_value());
}

TEST_CASE("mixture counts") {
  CHECK(mixture_correct_count(0.3, 100) == 30);
  CHECK(mixture_correct_count(0.7, 100) == 70);
  CHECK_THROWS_AS(mixture_correct_count(0.25, 10), Error);
  CHECK_THROWS_AS(mixture_correct_count(1.5, 10), Error);
  const auto levels = default_mixture_levels();
  REQUIRE(levels.size() == 11);
  CHECK(levels.front() == 0.0);
  CHECK(levels.back() == 1.0);
  for (double l : levels) CHECK_NOTHROW(mixture_correct_count(l, 100));
}

TEST_CASE("mixture: no sampling freedom gives zero stderr") {
  std::mt19937_64 rng(53);
  const auto rows = testsupport::float_rows(rng, 100, 6);
  const auto m = testsupport::to_embedding(rows);
  std::vector<nlohmann::json> lines;
  for (std::size_t i = 0; i < 100; ++i) lines.push_back({{"row_index", i}, {"correct", true}});
  const auto metas = metas_from(lines);
  const std::vector<double> levels{1.0};
  const auto pts = accuracy_mixture_curve(m, metas, levels, 100, 5, 0);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].mean_distance == Approx(oracle::mean_pairwise_cosine(rows)).epsilon(1e-12));
  CHECK(pts[0].std_error == 0.0);
  CHECK(pts[0].seeds == 5);
}

TEST_CASE("mixture: orthogonal construction follows the pair-count formula") {
  const auto pool = testsupport::orthogonal_pool(100, 100);
  const auto metas = metas_from(pool.meta);
  const auto levels = default_mixture_levels();
  const auto pts = accuracy_mixture_curve(pool.matrix, metas, levels, 100, 3, 11);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::size_t incorrect = 100 - mixture_correct_count(levels[i], 100);
    CHECK(std::abs(pts[i].mean_distance - oracle::orthogonal_mixture_distance(incorrect, 100)) <= 1e-12);
    CHECK(pts[i].std_error <= 1e-12);
    if (i > 0) CHECK(pts[i].mean_distance > pts[i - 1].mean_distance);
  }
}

TEST_CASE("mixture: insufficient pools are an error") {
  const auto pool = testsupport::orthogonal_pool(50, 100);
  const auto metas = metas_from(pool.meta);
  const std::vector<double> levels{0.6};
  try {
    accuracy_mixture_curve(pool.matrix, metas, levels, 100, 1, 0);
    FAIL("expected insufficient pool");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_pool);
  }
}

TEST_CASE("mixture results do not depend on the worker count") {
  std::mt19937_64 rng(59);
  const auto m = testsupport::to_embedding(testsupport::float_rows(rng, 200, 6));
  std::vector<nlohmann::json> lines;
  for (std::size_t i = 0; i < 200; ++i) lines.push_back({{"row_index", i}, {"correct", i % 3 != 0}});
  const auto metas = metas_from(lines);
  const std::vector<double> levels{0.0, 0.5, 1.0};
  set_worker_count(1);
  const auto a = accuracy_mixture_curve(m, metas, levels, 60, 4, 3);
  set_worker_count(6);
  const auto b = accuracy_mixture_curve(m, metas, levels, 60, 4, 3);
  set_worker_count(std::nullopt);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mean_distance == b[i].mean_distance);
    CHECK(a[i].std_error == b[i].std_error);
  }
}

TEST_CASE("checkpoint cluster tracking") {
  const auto m = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {0, 1}, {1, 0}});
  std::vector<CheckpointInput> one{{"ck0", std::cref(m), {{"a", {0, 1}}, {"b", {2, 3}}}, 1.5}};
  const auto r = checkpoint_cluster_tracking(one);
  REQUIRE(r.size() == 1);
  CHECK(std::abs(r[0].between) <= 1e-12);
  CHECK(r[0].within == Approx(1.0 - std::sqrt(0.5)).epsilon(1e-14));
  CHECK(r[0].loss == 1.5);

  std::mt19937_64 rng(61);
  const auto rows = testsupport::float_rows(rng, 40, 6);
  auto doubled = rows;
  for (auto& row : doubled) {
    for (double& v : row) v *= 2.0;
  }
  const auto m1 = testsupport::to_embedding(rows), m2 = testsupport::to_embedding(doubled);
  ClusterSet cs;
  for (std::size_t i = 0; i < 40; ++i) cs["k" + std::to_string(i % 4)].push_back(i);
  std::vector<CheckpointInput> two{{"early", std::cref(m1), cs, std::nullopt}, {"late", std::cref(m2), cs, std::nullopt}};
  const auto s = checkpoint_cluster_tracking(two);
  CHECK(s[0].checkpoint_tag == "early");
  CHECK(s[1].checkpoint_tag == "late");
  CHECK(s[1].within == Approx(s[0].within).epsilon(1e-12));
  CHECK(s[1].between == Approx(s[0].between).epsilon(1e-12));

  double hand = 0.0;
  for (const auto& [id, idx] : cs) {
    oracle::Rows members;
    for (auto i : idx) members.push_back(rows[i]);
    const auto c = oracle::mean_row(members);
    double d = 0.0;
    for (const auto& row : members) d += oracle::cosine_distance(row, c);
    hand += d / static_cast<double>(members.size());
  }
  CHECK(s[0].within == Approx(hand / 4.0).epsilon(1e-12));
}

TEST_CASE("checkpoint cluster tracking validation") {
  const auto m = EmbeddingMatrix::from_rows({{1, 0}, {0, 1}, {1, 1}, {1, 2}});
  std::vector<CheckpointInput> differ{{"a", std::cref(m), {{"x", {0, 1}}, {"y", {2, 3}}}, std::nullopt},
                                      {"b", std::cref(m), {{"x", {0, 1}}, {"z", {2, 3}}}, std::nullopt}};
  try {
    checkpoint_cluster_tracking(differ);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::mismatch);
  }
  std::vector<CheckpointInput> small{{"a", std::cref(m), {{"x", {0}}, {"y", {2, 3}}}, std::nullopt}};
  CHECK_THROWS_AS(checkpoint_cluster_tracking(small), Error);
}

TEST_CASE("clusters_from_meta groups by cluster id") {
  const auto metas = metas_from({{{"row_index", 0}, {"cluster_id", "b"}},
                                 {{"row_index", 1}, {"cluster_id", "a"}},
                                 {{"row_index", 2}},
                                 {{"row_index", 3}, {"cluster_id", "b"}}});
  const auto cs = clusters_from_meta(metas);
  REQUIRE(cs.size() == 2);
  CHECK(cs.at("b") == std::vector<std::size_t>{0, 3});
  CHECK(cs.at("a") == std::vector<std::size_t>{1});
}
