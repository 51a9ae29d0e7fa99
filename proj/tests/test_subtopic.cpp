#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "sst/evalcli.hpp"
#include "sst/simgraph.hpp"
#include "sst/subtopic.hpp"
#include "support.hpp"

using namespace sst;
using sst::testing::random_matrix;
using sst::testing::random_stochastic;

namespace {

SimilarityMatrix block_matrix(const std::vector<int>& blocks) {
  SimilarityMatrix a;
  const std::size_t n = blocks.size();
  a.values = Matrix(n, n);
  a.split = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a.values(i, j) = i != j && blocks[i] == blocks[j] ? 1.0 : 0.0;
  }
  return a;
}

// Noisy block structure: strong within-block weights plus weak cross edges.
SimilarityMatrix noisy_blocks(const std::vector<int>& blocks, Rng& rng) {
  auto a = block_matrix(blocks);
  const std::size_t n = blocks.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = blocks[i] == blocks[j] ? 0.6 + 0.4 * rng.uniform() : 0.05 * rng.uniform();
      a.values(i, j) = a.values(j, i) = v;
    }
  }
  return a;
}

Matrix one_hot(const std::vector<int>& ids, std::size_t m) {
  Matrix b(ids.size(), m);
  for (std::size_t i = 0; i < ids.size(); ++i) b(i, static_cast<std::size_t>(ids[i])) = 1.0;
  return b;
}

// 1/2 sum (p - q) ln(p / q), an equivalent form of the symmetrized KL.
double skl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * std::log(p[i] / q[i]);
  return 0.5 * s;
}

SimilarityMatrix random_adjacency(std::size_t n, Rng& rng) {
  SimilarityMatrix a;
  a.values = Matrix(n, n);
  a.split = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = rng.bernoulli(0.5) ? rng.uniform() : 0.0;
      a.values(i, j) = a.values(j, i) = v;
    }
  }
  return normalize_sparsify(a, 3);
}

}  // namespace

TEST_SUITE("subtopic") {
  TEST_CASE("choose_cluster_count") {
    CHECK(choose_cluster_count(18, 18, 6) == 6);
    CHECK(choose_cluster_count(2, 3, 6) == 2);
    CHECK(choose_cluster_count(20, 20, 6) == 7);
    CHECK(choose_cluster_count(1, 0, 6) == 1);
    CHECK_THROWS_AS(choose_cluster_count(3, 3, 0), Error);
  }

  TEST_CASE("compact_partition renumbers in increasing order") {
    const auto p = compact_partition({5, 2, 5, 9}, 2);
    CHECK(p.m == 3);
    CHECK(p.assignment == std::vector<int>{1, 0, 1, 2});
    CHECK(p.query_clusters() == std::vector<std::vector<std::size_t>>{{1}, {0}, {}});
    CHECK(p.candidate_clusters() == std::vector<std::vector<std::size_t>>{{}, {0}, {1}});
  }

  TEST_CASE("spectral clustering recovers exact blocks") {
    const std::vector<int> blocks{0, 0, 0, 1, 1, 1, 0, 1};
    const auto p = spectral_cluster(block_matrix(blocks), 2, 1);
    CHECK(p.m == 2);
    CHECK(adjusted_rand_index(p.assignment, blocks) == doctest::Approx(1.0));
  }

  TEST_CASE("spectral clustering: disconnected pair and all-zero graphs") {
    SimilarityMatrix a;
    a.values = Matrix(2, 2);
    a.split = 1;
    Diagnostics diag;
    const auto p = spectral_cluster(a, 2, 1, &diag);
    CHECK(p.assignment == std::vector<int>{0, 1});
    CHECK(diag.warnings.size() == 1);

    a.values = Matrix(5, 5);
    a.split = 2;
    const auto q = spectral_cluster(a, 2, 1, &diag);
    CHECK(q.m == 1);
    CHECK(diag.warnings.size() == 2);
  }

  TEST_CASE("spectral clustering is deterministic and covers every sentence") {
    Rng rng(4);
    const std::vector<int> blocks{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
    const auto a = noisy_blocks(blocks, rng);
    const auto p1 = spectral_cluster(a, 3, 77);
    const auto p2 = spectral_cluster(a, 3, 77);
    CHECK(p1 == p2);
    CHECK(p1.assignment.size() == blocks.size());
    for (int id : p1.assignment) CHECK((id >= 0 && id < static_cast<int>(p1.m)));
  }

  TEST_CASE("spectral partition is invariant to scaling and permutation") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> blocks;
      for (int b = 0; b < 3; ++b) blocks.insert(blocks.end(), 3 + rng.index(4), b);
      rng.shuffle(blocks);
      const auto a = noisy_blocks(blocks, rng);
      const auto base = spectral_cluster(a, 3, 5);

      SimilarityMatrix scaled = a;
      for (auto& v : scaled.values.data()) v *= 7.5;
      CHECK(adjusted_rand_index(spectral_cluster(scaled, 3, 5).assignment, base.assignment) == doctest::Approx(1.0));

      std::vector<std::size_t> perm(blocks.size());
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      SimilarityMatrix permuted = a;
      for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t j = 0; j < perm.size(); ++j) permuted.values(i, j) = a(perm[i], perm[j]);
      }
      const auto p = spectral_cluster(permuted, 3, 5);
      std::vector<int> unpermuted(perm.size());
      for (std::size_t i = 0; i < perm.size(); ++i) unpermuted[perm[i]] = p.assignment[i];
      CHECK(adjusted_rand_index(unpermuted, base.assignment) == doctest::Approx(1.0));
    }
  }

  TEST_CASE("assign_soft: zero projection gives uniform rows") {
    Rng rng(1);
    auto params = init_head(8, 6, 5, 3);
    for (auto& v : params.projection.data()) v = 0.0;
    const auto adj = random_adjacency(7, rng);
    const auto b = assign_soft(adj, random_matrix(7, 8, rng), params, 4);
    REQUIRE(b.cols() == 4);
    for (double v : b.data()) CHECK(v == doctest::Approx(0.25));
  }

  TEST_CASE("assign_soft rows are distributions") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 2 + rng.index(8);
      const auto params = init_head(5, 4, 6, static_cast<std::uint64_t>(trial));
      const std::size_t m = 1 + rng.index(6);
      const auto b = assign_soft(random_adjacency(n, rng), random_matrix(n, 5, rng), params, m);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (double v : b.row(i)) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("an isolated node only attends to itself") {
    Rng rng(3);
    const std::size_t n = 6;
    SimilarityMatrix a;
    a.values = Matrix(n, n);
    a.split = 3;
    for (std::size_t i = 0; i < n - 1; ++i) {
      for (std::size_t j = 0; j < n - 1; ++j) a.values(i, j) = i != j ? 1.0 : 0.0;
    }
    const auto adj = normalize_sparsify(a, 4);
    const auto params = init_head(5, 4, 4, 9);
    const auto e = random_matrix(n, 5, rng);
    auto zeroed = e;
    for (std::size_t i = 0; i < n - 1; ++i) {
      for (auto& v : zeroed.row(i)) v = 0.0;
    }
    const auto full = head_forward(adj, e, params, 3);
    const auto alone = head_forward(adj, zeroed, params, 3);
    for (std::size_t j = 0; j < params.hidden(); ++j) CHECK(full.hidden(n - 1, j) == alone.hidden(n - 1, j));
    CHECK(full.attention(n - 1, n - 1) == 1.0);
  }

  TEST_CASE("head input checks") {
    Rng rng(4);
    const auto params = init_head(5, 4, 3, 1);
    const auto adj = random_adjacency(4, rng);
    CHECK_THROWS_AS(assign_soft(adj, random_matrix(4, 6, rng), params, 2), Error);
    CHECK_THROWS_AS(assign_soft(adj, random_matrix(3, 5, rng), params, 2), Error);
    CHECK_THROWS_AS(assign_soft(adj, random_matrix(4, 5, rng), params, 4), Error);
  }

  TEST_CASE("loss_positive: symmetrized KL of max-pooled distributions") {
    // Query rows: three in cluster 0, one in cluster 1 -> (0.75, 0.25).
    // Candidate rows: two and two -> (0.5, 0.5).
    const auto b = one_hot({0, 0, 0, 1, 0, 0, 1, 1}, 2);
    const double expected = skl_oracle({0.75, 0.25}, {0.5, 0.5});
    CHECK(expected == doctest::Approx(0.1373).epsilon(1e-4));
    CHECK(loss_positive(b, 4, 4, 1e-15) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(std::abs(symmetric_kl(std::vector<double>{0.75, 0.25}, std::vector<double>{0.5, 0.5}) - expected) < 1e-12);
    const auto swapped = one_hot({0, 0, 1, 1, 0, 0, 0, 1}, 2);
    CHECK(loss_positive(swapped, 4, 4, 1e-6) == doctest::Approx(loss_positive(b, 4, 4, 1e-6)).epsilon(1e-12));
  }

  TEST_CASE("loss_positive properties") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t lq = 1 + rng.index(6), ld = 1 + rng.index(6), m = 1 + rng.index(5);
      const auto b = random_stochastic(lq + ld, m, rng);
      const double l = loss_positive(b, lq, ld, 1e-6);
      CHECK(l >= 0.0);
      // Swap the query and candidate blocks.
      Matrix s(lq + ld, m);
      for (std::size_t i = 0; i < ld; ++i) {
        for (std::size_t c = 0; c < m; ++c) s(i, c) = b(lq + i, c);
      }
      for (std::size_t i = 0; i < lq; ++i) {
        for (std::size_t c = 0; c < m; ++c) s(ld + i, c) = b(i, c);
      }
      CHECK(loss_positive(s, ld, lq, 1e-6) == doctest::Approx(l).epsilon(1e-10));
      // Identical halves -> 0.
      Matrix twin(2 * lq, m);
      for (std::size_t i = 0; i < lq; ++i) {
        for (std::size_t c = 0; c < m; ++c) twin(i, c) = twin(lq + i, c) = b(i, c);
      }
      CHECK(loss_positive(twin, lq, lq, 1e-6) == doctest::Approx(0.0).epsilon(1e-12));
    }
  }

  TEST_CASE("pooled_distribution keeps each row's maximum") {
    Matrix b(2, 3);
    b(0, 0) = 0.2, b(0, 1) = 0.5, b(0, 2) = 0.3;
    b(1, 0) = 0.6, b(1, 1) = 0.3, b(1, 2) = 0.1;
    const auto p = pooled_distribution(b, 0, 2, 0.0);
    CHECK(p[0] == doctest::Approx(0.6 / 1.1));
    CHECK(p[1] == doctest::Approx(0.5 / 1.1));
    CHECK(p[2] == 0.0);
    const auto smoothed = pooled_distribution(b, 0, 2, 0.1);
    CHECK(smoothed[2] == doctest::Approx(0.1 / 1.3));
  }

  TEST_CASE("loss_negative") {
    CHECK(loss_negative(Matrix::identity(3)) == doctest::Approx(0.0));
    CHECK(loss_negative(one_hot({0, 0, 1, 1}, 2)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(loss_negative(Matrix(5, 3)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  }

  TEST_CASE("loss_negative decreases from uniform toward orthonormal columns") {
    const std::size_t m = 3;
    Matrix uniform(m, m, 1.0 / m);
    const Matrix target = Matrix::identity(m);
    double previous = loss_negative(uniform) + 1.0;
    for (int step = 0; step <= 9; ++step) {
      const double t = step / 9.0;
      Matrix b(m, m);
      for (std::size_t i = 0; i < b.data().size(); ++i) {
        b.data()[i] = (1.0 - t) * uniform.data()[i] + t * target.data()[i];
      }
      const double l = loss_negative(b);
      CHECK(l >= 0.0);
      CHECK(l < previous);
      previous = l;
    }
  }

  TEST_CASE("harden: argmax with ties to the lowest id") {
    const auto hard = one_hot({1, 0, 2, 2}, 3);
    CHECK(harden(hard, 2).assignment == std::vector<int>{1, 0, 2, 2});
    Matrix tie(1, 2, 0.5);
    CHECK(harden(tie, 1).assignment == std::vector<int>{0});
    const auto gap = one_hot({0, 2, 2}, 3);
    const auto p = harden(gap, 1);
    CHECK(p.assignment == std::vector<int>{0, 1, 1});
    CHECK(p.m == 2);
  }

  TEST_CASE("train_head guards") {
    Rng rng(6);
    HeadExample pos{random_adjacency(6, rng), random_matrix(6, 5, rng), 3, 3, 2, 1};
    HeadExample neg = pos;
    neg.label = 0;
    const HeadTrainOptions options{1e-3, 1, 4, 4, 4};
    AdaptiveLossConfig off;
    off.enable_lp = off.enable_ln = false;
    std::vector<HeadExample> both{pos, neg};
    auto kind = [&](const std::vector<HeadExample>& ex, const AdaptiveLossConfig& cfg) {
      try {
        train_head(ex, cfg, options, 1);
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::kIoError;
    };
    CHECK(kind(both, off) == ErrorKind::kNoLossEnabled);
    CHECK(kind({neg}, {}) == ErrorKind::kNoPositivePairs);
    CHECK(kind({pos}, {}) == ErrorKind::kNoNegativePairs);
    AdaptiveLossConfig lp_only;
    lp_only.enable_ln = false;
    const auto trained = train_head(std::vector<HeadExample>{pos}, lp_only, options, 1);
    CHECK(trained.frozen);
    auto frozen = trained;
    CHECK_THROWS_AS(apply_gradient(frozen, HeadGradient::zeros_like(frozen), 0.1), Error);
  }

  TEST_CASE("train_head is deterministic per seed") {
    Rng rng(7);
    std::vector<HeadExample> ex;
    for (int i = 0; i < 6; ++i) {
      ex.push_back({random_adjacency(6, rng), random_matrix(6, 5, rng), 3, 3, 3, i % 2});
    }
    const HeadTrainOptions options{1e-2, 2, 4, 4, 4};
    CHECK(train_head(ex, {}, options, 3) == train_head(ex, {}, options, 3));
    CHECK_FALSE(train_head(ex, {}, options, 3) == train_head(ex, {}, options, 4));
  }

  // With L_n on, held-out L_p drifts upward instead (see the README), so this
  // isolates L_p and gives it a step size large enough to beat argmax noise.
  TEST_CASE("training on L_p alone lowers held-out positive loss") {
    ExperimentConfig cfg;
    cfg.synthetic.train_pairs = 300;
    cfg.synthetic.test_pairs = 100;
    cfg.clustering = ClusteringKind::kAdaptive;
    cfg.head.enable_ln = false;
    cfg.head.learning_rate = 0.3;
    cfg.head.batch_size = 64;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto data = prepare_data(cfg, seed);
      const auto c = cluster_data(cfg, data, seed);
      REQUIRE(c.head_curve.size() == 5);
      CHECK(c.head_curve.back() < 0.7 * c.head_curve.front());
      if (seed == 1) {
        for (std::size_t e = 1; e < 5; ++e) CHECK(c.head_curve[e] < c.head_curve[e - 1]);
      }
      REQUIRE(c.head);
      CHECK(c.head->frozen);
      CHECK(c.train.size() == data.train.size());
    }
  }

  TEST_CASE("head and partition serialization round-trip") {
    const auto params = init_head(5, 4, 3, 11);
    CHECK(head_from_json(head_to_json(params)) == params);
    CHECK_THROWS_AS(head_from_json("{\"kind\":\"other\"}"), Error);

    const std::vector<SubtopicPartition> parts{compact_partition({0, 1, 1, 0}, 2), compact_partition({0, 0, 0}, 1)};
    std::stringstream buf;
    write_partitions_jsonl(buf, {"a::b", "c::d"}, parts);
    const auto back = parse_partitions_jsonl(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "a::b");
    CHECK(back[0].second == parts[0]);
    CHECK(back[1].second == parts[1]);
    std::istringstream bad("{\"pair_id\":\"x\",\"split\":1,\"m\":2,\"assignment\":[0,2]}\n");
    try {
      parse_partitions_jsonl(bad);
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kParseError);
      CHECK(e.line() == 1);
    }
  }
}
