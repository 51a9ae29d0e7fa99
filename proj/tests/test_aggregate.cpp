#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sst/aggregate.hpp"
#include "support.hpp"

using namespace sst;

namespace {

// Small labeled set: positives share words across the pair, negatives don't.
struct Toy {
  std::vector<DocumentPair> pairs;
  std::vector<SubtopicPartition> partitions;
  CorpusStats stats;
};

Toy toy(std::size_t count) {
  Toy t;
  for (std::size_t i = 0; i < count; ++i) {
    const bool positive = i % 2 == 0;
    const std::string s = std::to_string(i);
    std::vector<std::string> q, d;
    for (std::size_t j = 0; j < 6; ++j) {
      const std::string tag = std::to_string(j % 3);
      q.push_back("topic" + tag + " alpha" + s + " q" + std::to_string(j) + ".");
      d.push_back((positive ? "topic" + tag : "other" + tag) + " beta" + s + " d" + std::to_string(j) + ".");
    }
    DocumentPair pair{make_document("q" + s, q), make_document("d" + s, d), positive ? 1 : 0};
    t.partitions.push_back(compact_partition({0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2}, 6));
    t.pairs.push_back(std::move(pair));
  }
  t.stats = CorpusStats::from_pairs(t.pairs);
  return t;
}

std::vector<ViewPool> pools_for(const Toy& t, SamplerKind kind, std::size_t size, std::uint64_t seed) {
  std::vector<ViewPool> pools;
  for (std::size_t i = 0; i < t.pairs.size(); ++i) {
    pools.push_back(build_view_pool(t.pairs[i], t.partitions[i], kind, size, 3, seed));
  }
  return pools;
}

MatcherTrainOptions fast_options() {
  MatcherTrainOptions o;
  o.learning_rate = 0.05;
  o.batch_size = 4;
  o.negatives = 2;
  return o;
}

}  // namespace

TEST_SUITE("aggregate") {
  TEST_CASE("epoch order is a seeded permutation") {
    const auto a = epoch_order(20, 5, 0);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expected(20);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(sorted == expected);
    CHECK(epoch_order(20, 5, 0) == a);
    CHECK(epoch_order(20, 5, 1) != a);
    CHECK(epoch_order(20, 6, 0) != a);
  }

  TEST_CASE("one-entry pools train exactly like static views") {
    const auto t = toy(12);
    const auto pools = pools_for(t, SamplerKind::kSoft, 1, 3);
    std::vector<ViewPair> views;
    for (const auto& p : pools) views.push_back(p.entries[0]);
    const auto temporal = temporal_train_classify(t.pairs, pools, 1, t.stats, fast_options(), 9);
    const auto fixed = static_train_classify(t.pairs, views, 1, t.stats, fast_options(), 9);
    CHECK(temporal.params == fixed.params);
    CHECK(temporal.loss_curve == fixed.loss_curve);
  }

  TEST_CASE("pools of repeated views follow the static trajectory") {
    const auto t = toy(12);
    const std::size_t epochs = 5;
    auto pools = pools_for(t, SamplerKind::kUniform, epochs, 4);
    std::vector<ViewPair> views;
    for (auto& p : pools) {
      std::fill(p.entries.begin(), p.entries.end(), p.entries[0]);
      views.push_back(p.entries[0]);
    }
    const auto temporal = temporal_train_classify(t.pairs, pools, epochs, t.stats, fast_options(), 2);
    const auto fixed = static_train_classify(t.pairs, views, epochs, t.stats, fast_options(), 2);
    CHECK(temporal.params == fixed.params);
    CHECK(temporal.loss_curve == fixed.loss_curve);

    const SentenceEncoder encoder(t.stats, {16, 1});
    const auto rank_t = temporal_train_rank(t.pairs, pools, epochs, encoder, fast_options(), 2);
    const auto rank_s = static_train_rank(t.pairs, views, epochs, encoder, fast_options(), 2);
    CHECK(rank_t.params == rank_s.params);
    CHECK(rank_t.loss_curve.size() == epochs);
  }

  TEST_CASE("pool length must match the epoch count") {
    const auto t = toy(4);
    const auto pools = pools_for(t, SamplerKind::kUniform, 3, 1);
    try {
      temporal_train_classify(t.pairs, pools, 4, t.stats, fast_options(), 1);
      FAIL("expected PoolLengthMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kPoolLengthMismatch);
    }
  }

  TEST_CASE("temporal training fits the toy set") {
    const auto t = toy(40);
    const auto pools = pools_for(t, SamplerKind::kSoft, 10, 5);
    std::vector<double> losses;
    const auto result = temporal_train_classify(t.pairs, pools, 10, t.stats, fast_options(), 5,
                                                [&](std::size_t, double loss, const ClassifierParams&) {
                                                  losses.push_back(loss);
                                                });
    REQUIRE(result.loss_curve.size() == 10);
    CHECK(losses == result.loss_curve);
    CHECK(result.loss_curve.back() < result.loss_curve.front());
    InferenceConfig cfg;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < t.pairs.size(); ++i) {
      const auto s = infer_classify(t.pairs[i], t.partitions[i], cfg, result.params, t.stats, 1);
      correct += (s.value >= 0.5) == (t.pairs[i].label == 1);
    }
    CHECK(correct == t.pairs.size());
  }

  TEST_CASE("pooled scores") {
    const std::vector<double> s{0.2, 0.9, 0.4};
    CHECK(pool_scores(s, Pooling::kMax) == 0.9);
    CHECK(pool_scores(s, Pooling::kMean) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(pool_scores(std::vector<double>{}, Pooling::kMax), Error);
  }

  TEST_CASE("pooling invariants over random pools") {
    Rng rng(6);
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> s(1 + rng.index(8));
      for (double& v : s) v = rng.uniform();
      const double mx = pool_scores(s, Pooling::kMax);
      const double mean = pool_scores(s, Pooling::kMean);
      CHECK(mx == *std::max_element(s.begin(), s.end()));
      CHECK(std::abs(mean - std::accumulate(s.begin(), s.end(), 0.0) / s.size()) < 1e-12);
      auto shuffled = s;
      rng.shuffle(shuffled);
      CHECK(pool_scores(shuffled, Pooling::kMax) == mx);
      CHECK(std::abs(pool_scores(shuffled, Pooling::kMean) - mean) < 1e-12);
      auto with_max = s;
      with_max.push_back(mx);
      CHECK(pool_scores(with_max, Pooling::kMax) == mx);
      auto doubled = s;
      doubled.insert(doubled.end(), s.begin(), s.end());
      CHECK(std::abs(pool_scores(doubled, Pooling::kMean) - mean) < 1e-12);
    }
  }

  TEST_CASE("single-view inference is the single-view score") {
    const auto t = toy(2);
    ClassifierParams params;
    params.weights = {0.3, 0.2, 1.0, 2.0, -0.1, -0.5};
    InferenceConfig cfg;
    cfg.n = 1;
    const auto pooled = infer_classify(t.pairs[0], t.partitions[0], cfg, params, t.stats, 8);
    const auto pool = build_view_pool(t.pairs[0], t.partitions[0], cfg.sampler, 1, cfg.k, 8, "infer");
    const auto& v = pool.entries[0];
    const auto f = featurize(view_tokens(t.pairs[0].query, v.query), view_tokens(t.pairs[0].candidate, v.candidate),
                             t.stats);
    CHECK(pooled.value == score_classify(f, params).value);

    cfg.n = 5;
    const auto wide = infer_classify(t.pairs[0], t.partitions[0], cfg, params, t.stats, 8);
    REQUIRE(wide.components.size() == 5);
    for (double c : wide.components) CHECK(wide.value >= c);

    cfg.pooling = Pooling::kMean;
    CHECK_THROWS_AS(infer_classify(t.pairs[0], t.partitions[0], cfg, params, t.stats, 8), Error);
  }

  TEST_CASE("ranking by mean view score") {
    const auto t = toy(6);
    const SentenceEncoder encoder(t.stats, {16, 2});
    const auto params = init_rank_params(16);
    InferenceConfig cfg;
    cfg.pooling = Pooling::kMean;
    cfg.n = 4;
    std::vector<DocumentPair> candidates;
    std::vector<SubtopicPartition> partitions;
    for (std::size_t i = 0; i < t.pairs.size(); ++i) {
      DocumentPair p = t.pairs[i];
      p.query = t.pairs[0].query;
      candidates.push_back(p);
      partitions.push_back(t.partitions[i]);
    }
    const auto run = infer_rank(candidates, partitions, cfg, params, encoder, 3);
    REQUIRE(run.size() == candidates.size());
    for (std::size_t i = 0; i < run.size(); ++i) {
      CHECK(run[i].rank == i + 1);
      CHECK(run[i].qid == "q0");
      if (i > 0) CHECK(run[i - 1].score >= run[i].score);
      const auto it = std::find_if(candidates.begin(), candidates.end(),
                                   [&](const DocumentPair& c) { return c.candidate.id == run[i].docid; });
      REQUIRE(it != candidates.end());
      const auto pooled = infer_rank_pair(*it, partitions[it - candidates.begin()], cfg, params, encoder, 3);
      CHECK(pooled.value == run[i].score);
      CHECK(std::abs(pooled.value - std::accumulate(pooled.components.begin(), pooled.components.end(), 0.0) / 4) <
            1e-12);
    }
  }

  TEST_CASE("rank ties fall back to doc id") {
    const auto run = rank_candidates("q", {{"d3", 0.5}, {"d1", 0.5}, {"d2", 0.5}, {"d0", 0.7}}, "t");
    REQUIRE(run.size() == 4);
    CHECK(run[0].docid == "d0");
    CHECK(run[1].docid == "d1");
    CHECK(run[2].docid == "d2");
    CHECK(run[3].docid == "d3");
    CHECK(run[3].rank == 4);
    CHECK(run[0].tag == "t");
  }

  TEST_CASE("query likelihood") {
    CorpusStats stats;
    stats.add(make_document("c", {"a a b c."}));
    CHECK(ql_similarity({"a"}, {"a", "a", "b"}, stats, 0.0) == doctest::Approx(std::log(2.0 / 3.0)).epsilon(1e-12));
    CHECK(ql_similarity({"a", "a"}, {"a", "a", "b"}, stats, 0.0) ==
          doctest::Approx(2.0 * std::log(2.0 / 3.0)).epsilon(1e-12));
    const double absent = ql_similarity({"c"}, {"a", "a", "b"}, stats, 0.0);
    CHECK(std::isinf(absent));
    CHECK(absent < 0.0);

    // mu = 10, c absent from the doc: (0 + 10 p) / (3 + 10)
    const double mu = 10.0;
    const double expect = std::log(mu * 0.25 / (3.0 + mu));
    CHECK(ql_similarity({"c"}, {"a", "a", "b"}, stats, mu) == doctest::Approx(expect).epsilon(1e-12));

    Diagnostics diag;
    const double unseen = ql_similarity({"zzz"}, {"a", "b"}, stats, mu, &diag);
    CHECK(std::isfinite(unseen));
    CHECK(diag.warnings.size() == 1);
  }

  TEST_CASE("query likelihood tends to the collection model") {
    CorpusStats stats;
    stats.add(make_document("c", {"a a a a a a a a b b b b c c d."}));
    const std::vector<std::string> doc{"d", "d", "d", "c"};
    const std::vector<std::vector<std::string>> views{{"a"}, {"b"}, {"c"}, {"d"}};
    // Under the document alone d ranks first; the collection puts a first.
    std::vector<double> ql;
    for (const auto& v : views) ql.push_back(ql_similarity(v, doc, stats, 1e9));
    for (std::size_t i = 0; i + 1 < views.size(); ++i) {
      CHECK(ql[i] > ql[i + 1]);
      const double background = std::log(stats.background(views[i][0]));
      CHECK(ql[i] == doctest::Approx(background).epsilon(1e-6));
    }
    CHECK(ql_similarity({"d"}, doc, stats, 1.0) > ql_similarity({"a"}, doc, stats, 1.0));
  }

  TEST_CASE("range schedule bins") {
    const auto t = toy(1);
    const auto pool = build_view_pool(t.pairs[0], t.partitions[0], SamplerKind::kUniform, 40, 2, 7);
    const auto order = ql_order(t.pairs[0], pool, t.stats, kDefaultDirichletMu);
    REQUIRE(order.size() == 40);
    for (std::size_t r = 1; r < order.size(); ++r) {
      CHECK(view_pair_ql(t.pairs[0], pool.entries[order[r - 1]], t.stats, kDefaultDirichletMu) >=
            view_pair_ql(t.pairs[0], pool.entries[order[r]], t.stats, kDefaultDirichletMu));
    }

    const auto four = range_schedule(t.pairs[0], pool, {40, 4, kDefaultDirichletMu}, t.stats, 3);
    REQUIRE(four.ranks.size() == 4);
    REQUIRE(four.pool.size() == 4);
    for (std::size_t e = 0; e < 4; ++e) {
      CHECK(four.ranks[e] >= 10 * e);
      CHECK(four.ranks[e] < 10 * (e + 1));
      CHECK(four.pool.entries[e] == pool.entries[order[four.ranks[e]]]);
    }

    const auto small = build_view_pool(t.pairs[0], t.partitions[0], SamplerKind::kUniform, 4, 2, 7);
    const auto sorted = range_schedule(t.pairs[0], small, {4, 4, kDefaultDirichletMu}, t.stats, 3);
    const auto small_order = ql_order(t.pairs[0], small, t.stats, kDefaultDirichletMu);
    for (std::size_t e = 0; e < 4; ++e) CHECK(sorted.pool.entries[e] == small.entries[small_order[e]]);

    CHECK_THROWS_AS(range_schedule(t.pairs[0], small, {40, 4, kDefaultDirichletMu}, t.stats, 3), Error);
  }

  TEST_CASE("attention pooling scorer") {
    AttentionPoolParams params;
    const std::vector<FeatureVector> views{{1, 0, 0, 0, 0, 1}, {0, 0, 0, 0, 0, 1}};
    CHECK(attention_pool_score(views, params) == 0.5);
    params.scorer.weights[kOverlapCount] = 2.0;
    // beta = 0 averages the logits: sigmoid((2 + 0) / 2).
    CHECK(attention_pool_score(views, params) == doctest::Approx(sigmoid(1.0)).epsilon(1e-12));
    params.beta = 50.0;
    CHECK(attention_pool_score(views, params) == doctest::Approx(sigmoid(2.0)).epsilon(1e-9));

    std::vector<AttentionExample> batch;
    Rng rng(8);
    for (int i = 0; i < 30; ++i) {
      AttentionExample ex;
      ex.label = i % 2;
      for (int v = 0; v < 3; ++v) {
        FeatureVector f{};
        f[kJaccard] = (ex.label ? 0.7 : 0.2) + 0.3 * rng.uniform() - (v == 0 ? 0.3 : 0.0);
        f[kBias] = 1.0;
        ex.views.push_back(f);
      }
      batch.push_back(ex);
    }
    MatcherTrainOptions options;
    options.learning_rate = 0.5;
    const auto trained = train_attention_pool(batch, 30, options, 1);
    CHECK(trained.loss_curve.back() < trained.loss_curve.front());
  }
}
