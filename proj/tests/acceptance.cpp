// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
//
//   sst_acceptance --sst build/tools/sst [--only 3,7] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradient_checks.hpp"
#include "sst/evalcli.hpp"
#include "support.hpp"

using namespace sst;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------

Outcome formula_oracles() {
  Timer timer;
  std::vector<std::string> failed;
  auto expect = [&](const std::string& name, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) failed.push_back(name + "=" + fmt(got, 10) + " want " + fmt(want, 10));
  };

  const std::vector<TokenList> sentences{{"the", "cat", "sat"}, {"the", "cat", "ran"}, {"a", "b", "c"}, {"a", "b", "c"},
                                         {"x", "y"}};
  const auto a = lexical_similarity(sentences, 2);
  expect("lexical", a(0, 1), 2.0 / (std::log(3.0) + std::log(3.0)), 1e-9);
  expect("lexical-duplicate", a(2, 3), 3.0 / (2.0 * std::log(3.0)), 1e-9);
  expect("lexical-disjoint", a(0, 4), 0.0, 1e-9);

  const auto soft = soft_distributions(testing::planted_sizes({3, 1}, {2, 2}).partition);
  expect("soft-Pa0", soft.alignment[0], 2.0 / 3.0, 1e-9);
  expect("soft-Qq0", soft.query[0], 6.0 / 7.0, 1e-9);
  expect("soft-Qq1", soft.query[1], 1.0 / 7.0, 1e-9);

  // One-hot rows: three query rows in cluster 0 and one in 1, two and two
  // on the candidate side, so the pooled distributions are (3/4, 1/4) and
  // (1/2, 1/2).
  Matrix b(8, 2);
  for (std::size_t i : {0, 1, 2, 4, 5}) b(i, 0) = 1.0;
  for (std::size_t i : {3, 6, 7}) b(i, 1) = 1.0;
  const double p0 = 0.75, p1 = 0.25, q0 = 0.5, q1 = 0.5;
  const double kl_sym =
      0.5 * (p0 * std::log(p0 / q0) + q0 * std::log(q0 / p0)) + 0.5 * (p1 * std::log(p1 / q1) + q1 * std::log(q1 / p1));
  expect("L_p", loss_positive(b, 4, 4, 1e-12), kl_sym, 1e-9);

  Matrix balanced(4, 2);
  balanced(0, 0) = balanced(1, 0) = balanced(2, 1) = balanced(3, 1) = 1.0;
  expect("L_n", loss_negative(balanced), std::sqrt(2.0), 1e-9);
  expect("L_n-identity", loss_negative(Matrix::identity(3)), 0.0, 1e-9);

  CorpusStats stats;
  stats.add(make_document("c", {"a a b."}));
  expect("QL", ql_similarity({"a"}, {"a", "a", "b"}, stats, 0.0), std::log(2.0 / 3.0), 1e-9);

  const double dcg = 1.0 + 0.0 / std::log2(3.0) + 1.0 / std::log2(4.0);
  const double idcg = 1.0 + 1.0 / std::log2(3.0);
  expect("NDCG", ndcg_at({1, 0, 1}, {1, 0, 1}, 3), dcg / idcg, 1e-6);
  expect("NDCG-decimal", ndcg_at({1, 0, 1}, {1, 0, 1}, 3), 0.919720, 1e-6);

  const double elapsed = timer.seconds();
  if (elapsed >= 1.0) failed.push_back("took " + fmt(elapsed, 2) + " s");
  std::string detail = "13 oracles in " + fmt(elapsed, 3) + " s";
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), detail};
}

Outcome gradient_suite() {
  Timer timer;
  constexpr int kInstances = 25;
  struct Named {
    const char* name;
    testing::GradientCheck result;
  };
  const std::vector<Named> checks{{"L_p", testing::check_loss_positive(kInstances, 11)},
                                  {"L_n", testing::check_loss_negative(kInstances, 12)},
                                  {"head", testing::check_head(kInstances, 13)},
                                  {"CE", testing::check_cross_entropy(kInstances, 14)},
                                  {"InfoNCE", testing::check_info_nce(kInstances, 15)},
                                  {"attention-pool", testing::check_attention_pool(kInstances, 16)}};
  bool pass = true;
  std::string detail;
  for (const auto& c : checks) {
    pass = pass && c.result.max_error < 1e-4 && c.result.instances >= 20 && c.result.vanished == 0;
    detail += std::string(c.name) + " " + sci(c.result.max_error) + ", ";
  }
  const double elapsed = timer.seconds();
  pass = pass && elapsed < 30.0;
  return {pass, detail + std::to_string(kInstances) + " instances each in " + fmt(elapsed, 2) + " s"};
}

Outcome clustering_recovery() {
  Timer timer;
  SyntheticSpec spec;
  spec.topic_count = 3;
  spec.distractor_topics = 0;
  spec.noise_rate = 0.0;
  spec.pair_count = 100;
  spec.seed = 2024;
  const auto corpus = generate_synthetic(spec);
  double sum = 0.0;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto truth = testing::concat(corpus.topics[i].query, corpus.topics[i].candidate);
    const std::size_t m = std::set<int>(truth.begin(), truth.end()).size();
    const auto partition = spectral_cluster(lexical_similarity(corpus.pairs[i]), m, derive_seed(spec.seed, "c3", i));
    sum += adjusted_rand_index(partition.assignment, truth);
  }
  const double mean = sum / static_cast<double>(corpus.pairs.size());
  const double elapsed = timer.seconds();
  return {mean >= 0.9 && elapsed < 60.0,
          "mean ARI " + fmt(mean) + " over " + std::to_string(corpus.pairs.size()) + " pairs in " + fmt(elapsed, 2) +
              " s"};
}

Outcome sampler_convergence() {
  Timer timer;
  constexpr int kDraws = 100000;
  Rng rng(77);
  auto l1 = [](const std::vector<double>& f, const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(f[i] - p[i]);
    return s;
  };
  // Histogram of the cluster behind the single sentence of each k = 1 view.
  auto histogram = [&](const testing::PlantedPair& p, auto&& sampler) {
    std::vector<double> fq(p.partition.m, 0.0), fd(p.partition.m, 0.0);
    for (int t = 0; t < kDraws; ++t) {
      const auto v = sampler(p.pair, p.partition, 1, rng);
      fq[p.partition.assignment[v.query.indices[0]]] += 1.0 / kDraws;
      fd[p.partition.assignment[p.partition.split + v.candidate.indices[0]]] += 1.0 / kDraws;
    }
    return std::pair{fq, fd};
  };

  // Cluster 3 is absent from the query.
  const auto up = testing::planted_sizes({4, 3, 2, 0}, {2, 2, 5, 1});
  const auto [uq, ud] = histogram(up, sample_uniform);
  const double uniform_err = std::max(l1(uq, uniform_distribution(up.partition.query_sizes())),
                                      l1(ud, uniform_distribution(up.partition.candidate_sizes())));

  const auto sp = testing::planted_sizes({3, 1, 2, 4}, {2, 2, 5, 0});
  const auto q = soft_distributions(sp.partition);
  const auto [sq, sd] = histogram(sp, sample_soft);
  const double soft_err = std::max(l1(sq, q.query), l1(sd, q.candidate));

  const auto hp = testing::planted_sizes({2, 6, 3}, {4, 5, 1});
  const std::size_t m = primary_cluster(hp.partition);
  std::size_t outside = 0, drawn = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto v = sample_hard(hp.pair, hp.partition, 5, rng);
    for (auto i : v.query.indices) outside += static_cast<std::size_t>(hp.partition.assignment[i]) != m;
    for (auto i : v.candidate.indices) outside += static_cast<std::size_t>(hp.partition.assignment[hp.partition.split + i]) != m;
    drawn += v.query.indices.size() + v.candidate.indices.size();
  }
  const double elapsed = timer.seconds();
  const bool pass = uniform_err <= 0.02 && soft_err <= 0.02 && outside == 0 && m == 1 && elapsed < 30.0;
  return {pass, "L1 uniform " + fmt(uniform_err) + ", soft " + fmt(soft_err) + "; hard " +
                    std::to_string(drawn - outside) + "/" + std::to_string(drawn) + " from M in " +
                    fmt(elapsed, 2) + " s"};
}

Outcome degenerate_equivalence() {
  SyntheticSpec spec;
  spec.pair_count = 80;
  spec.seed = 5;
  const auto corpus = generate_synthetic(spec);
  const auto stats = CorpusStats::from_pairs(corpus.pairs);
  std::vector<SubtopicPartition> parts;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) parts.push_back(cluster_direct(corpus.pairs[i], 6, i));
  const ExperimentConfig defaults;
  const auto options = defaults.matcher;
  const SentenceEncoder encoder(stats, {32, 3});

  auto pools = [&](std::size_t size, std::uint64_t seed) {
    std::vector<ViewPool> out;
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
      out.push_back(build_view_pool(corpus.pairs[i], parts[i], SamplerKind::kSoft, size, 8, seed));
    }
    return out;
  };
  auto first_views = [](const std::vector<ViewPool>& ps) {
    std::vector<ViewPair> v;
    for (const auto& p : ps) v.push_back(p.entries[0]);
    return v;
  };

  const auto single = pools(1, 21);
  const bool e1_classify = temporal_train_classify(corpus.pairs, single, 1, stats, options, 4).params ==
                           static_train_classify(corpus.pairs, first_views(single), 1, stats, options, 4).params;
  const bool e1_rank = temporal_train_rank(corpus.pairs, single, 1, encoder, options, 4).params ==
                       static_train_rank(corpus.pairs, first_views(single), 1, encoder, options, 4).params;

  constexpr std::size_t kEpochs = 6;
  auto repeated = pools(kEpochs, 22);
  for (auto& p : repeated) std::fill(p.entries.begin(), p.entries.end(), p.entries[0]);
  const bool same_classify =
      temporal_train_classify(corpus.pairs, repeated, kEpochs, stats, options, 4).params ==
      static_train_classify(corpus.pairs, first_views(repeated), kEpochs, stats, options, 4).params;
  const bool same_rank = temporal_train_rank(corpus.pairs, repeated, kEpochs, encoder, options, 4).params ==
                         static_train_rank(corpus.pairs, first_views(repeated), kEpochs, encoder, options, 4).params;

  auto yn = [](bool b) { return b ? "equal" : "DIFFER"; };
  return {e1_classify && e1_rank && same_classify && same_rank,
          std::string("E=1 classify ") + yn(e1_classify) + ", rank " + yn(e1_rank) + "; identical pools classify " +
              yn(same_classify) + ", rank " + yn(same_rank)};
}

Outcome pooling_exactness() {
  Rng rng(31);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> s(1 + rng.index(12));
    for (double& v : s) v = rng.uniform() * std::pow(10.0, static_cast<double>(rng.index(6)) - 3.0);
    const double mx = pool_scores(s, Pooling::kMax);
    const double mean = pool_scores(s, Pooling::kMean);
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end());
    const double reference_mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.size());
    bad += mx != sorted.back();
    bad += mean != reference_mean;
    for (int r = 0; r < 3; ++r) {
      rng.shuffle(s);
      bad += pool_scores(s, Pooling::kMax) != mx;
      bad += pool_scores(s, Pooling::kMean) != mean;
    }
  }

  SyntheticSpec spec;
  spec.pair_count = 30;
  const auto corpus = generate_synthetic(spec);
  const auto stats = CorpusStats::from_pairs(corpus.pairs);
  const SentenceEncoder encoder(stats, {32, 1});
  ClassifierParams cp;
  cp.weights = {0.2, 0.5, 1.5, 2.0, -0.3, -1.0};
  const auto rp = init_rank_params(32);
  std::size_t pipeline_bad = 0;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto part = cluster_direct(corpus.pairs[i], 6, i);
    InferenceConfig ic;
    ic.n = 3;
    const auto c = infer_classify(corpus.pairs[i], part, ic, cp, stats, i);
    pipeline_bad += c.value != *std::max_element(c.components.begin(), c.components.end());
    ic.pooling = Pooling::kMean;
    const auto r = infer_rank_pair(corpus.pairs[i], part, ic, rp, encoder, i);
    auto sorted = r.components;
    std::sort(sorted.begin(), sorted.end());
    pipeline_bad += r.value != std::accumulate(sorted.begin(), sorted.end(), 0.0) / 3.0;
  }
  return {bad == 0 && pipeline_bad == 0, std::to_string(bad) + " mismatches over 1000 random pools (4 orders each), " +
                                              std::to_string(pipeline_bad) + " over " +
                                              std::to_string(corpus.pairs.size()) + " inferred pairs"};
}

// Criteria 7 and 8 share the runs.
struct EndToEnd {
  std::vector<double> soft, hard, random, soft_n1;
  double seconds = 0.0;
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

EndToEnd end_to_end() {
  Timer timer;
  EndToEnd out;
  ExperimentConfig cfg;  // 2000 / 500 synthetic pairs, seeds 1-5
  for (auto seed : cfg.seeds) {
    const auto data = prepare_data(cfg, seed);
    const auto clustering = cluster_data(cfg, data, seed);
    for (auto kind : {SamplerKind::kSoft, SamplerKind::kHard, SamplerKind::kRandom}) {
      auto c = cfg;
      c.sampler = kind;
      const auto trained = train_matcher(c, data, clustering, seed);
      const double acc = evaluate_matcher(c, data, clustering, trained, seed).classification.accuracy;
      (kind == SamplerKind::kSoft ? out.soft : kind == SamplerKind::kHard ? out.hard : out.random).push_back(acc);
      if (kind == SamplerKind::kSoft) {
        c.inference_pool = 1;
        out.soft_n1.push_back(evaluate_matcher(c, data, clustering, trained, seed).classification.accuracy);
      }
    }
    std::cerr << "  seed " << seed << ": soft " << fmt(out.soft.back()) << " hard " << fmt(out.hard.back())
              << " random " << fmt(out.random.back()) << " soft n=1 " << fmt(out.soft_n1.back()) << "\n";
  }
  out.seconds = timer.seconds();
  return out;
}

Outcome sampler_ordering(const EndToEnd& e) {
  const double s = mean(e.soft), h = mean(e.hard), r = mean(e.random);
  const bool pass = s >= h && h >= r && s - r >= 0.05 && e.seconds < 600.0;
  return {pass, "mean accuracy soft " + fmt(s) + ", hard " + fmt(h) + ", random " + fmt(r) + "; soft - random " +
                    fmt(100.0 * (s - r), 2) + " points; " + fmt(e.seconds, 1) + " s"};
}

Outcome aggregation_gain(const EndToEnd& e) {
  const double n3 = mean(e.soft), n1 = mean(e.soft_n1);
  return {n3 >= n1, "mean accuracy n=3 " + fmt(n3) + ", n=1 " + fmt(n1)};
}

Outcome lambda_robustness() {
  Timer timer;
  ExperimentConfig cfg;
  cfg.clustering = ClusteringKind::kAdaptive;
  const auto report = lambda_sweep(cfg, {0.1, 1.0, 10.0}, {1, 2, 3});
  std::string detail;
  for (const auto& [lambda, m] : report.means) detail += "lambda " + fmt(lambda, 1) + ": " + fmt(m) + ", ";
  return {report.spread <= 0.03,
          detail + "spread " + fmt(100.0 * report.spread, 2) + " points; " + fmt(timer.seconds(), 1) + " s"};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome cli_determinism(const std::string& sst, const fs::path& work) {
  if (sst.empty()) return {false, "no --sst binary given"};
  Timer timer;
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path root = work / "run";
  const fs::path config = work / "config.json";
  const fs::path text = work / "input.txt";

  ExperimentConfig cfg;
  cfg.synthetic.train_pairs = 40;
  cfg.synthetic.test_pairs = 20;
  cfg.synthetic.spec.candidates_per_query = 3;
  cfg.epochs = 3;
  cfg.seeds = {1, 2};
  cfg.head.epochs = 2;
  cfg.range_sizes = {4, 8};
  cfg.range_epochs = 4;
  cfg.ndcg_cutoffs = {3};
  std::ofstream(config) << to_json(cfg).dump(2) << "\n";
  std::ofstream(text) << "First sentence here. A second one follows! Is this the third? Yes.\n";

  const std::string base = "\"" + sst + "\" --config \"" + config.string() + "\" --seed 4 --out ";
  auto dir = [&](const char* name) { return "\"" + (root / name).string() + "\""; };
  auto file = [&](const char* d, const char* f) { return "\"" + (root / d / f).string() + "\""; };
  const std::string partitions = " --train-partitions " + file("cluster-direct", "train_partitions.jsonl") +
                                 " --test-partitions " + file("cluster-direct", "test_partitions.jsonl");
  const std::vector<std::string> commands{
      base + dir("segment") + " segment --input \"" + text.string() + "\" --id doc",
      base + dir("synth") + " synth",
      base + dir("cluster-direct") + " cluster direct",
      base + dir("cluster-adaptive") + " cluster adaptive",
      base + dir("head") + " train-head",
      base + dir("sample") + " sample --split train",
      base + dir("train-classify") + " train --matcher classify" + partitions,
      base + dir("infer-classify") + " infer classify --params " + file("train-classify", "params.json") + partitions,
      base + dir("eval-classify") + " eval --predictions " + file("infer-classify", "predictions.csv"),
      base + dir("train-rank") + " train --matcher rank",
      base + dir("infer-rank") + " infer rank --params " + file("train-rank", "params.json"),
      base + dir("eval-rank") + " eval --run " + file("infer-rank", "run.txt") + " --qrels " +
          file("infer-rank", "qrels.txt"),
      base + dir("sweep") + " sweep-lambda --values 0.1 1",
      base + dir("ranges") + " analyze-ranges",
      base + dir("report") + " report",
  };
  const fs::path log = work / "cli.log";
  auto run_all = [&]() -> std::string {
    fs::remove_all(root);
    for (const auto& c : commands) {
      if (std::system((c + " >> \"" + log.string() + "\" 2>&1").c_str()) != 0) return "command failed: " + c;
    }
    return {};
  };

  if (auto err = run_all(); !err.empty()) return {false, err};
  const fs::path first = work / "first";
  fs::rename(root, first);
  if (auto err = run_all(); !err.empty()) return {false, err};

  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(first)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(entry.path(), first);
    if (!fs::exists(root / rel) || slurp(entry.path()) != slurp(root / rel)) differing.push_back(rel.string());
  }
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && !fs::exists(first / fs::relative(entry.path(), root))) {
      differing.push_back(fs::relative(entry.path(), root).string());
    }
  }
  std::string detail = std::to_string(commands.size()) + " commands, " + std::to_string(files) + " files, " +
                       std::to_string(differing.size()) + " differ";
  for (std::size_t i = 0; i < std::min<std::size_t>(differing.size(), 3); ++i) detail += " " + differing[i];
  return {differing.empty() && files > 0, detail + "; " + fmt(timer.seconds(), 1) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance criteria");
  std::string sst_path;
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "sst-acceptance").string();
  app.add_option("--sst", sst_path, "path to the sst CLI (criterion 10)");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--work", work, "scratch directory for criterion 10");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << std::endl;
  };

  report(1, "formula oracles", formula_oracles);
  report(2, "gradient suite", gradient_suite);
  report(3, "clustering recovery", clustering_recovery);
  report(4, "sampler convergence", sampler_convergence);
  report(5, "temporal degenerate equivalence", degenerate_equivalence);
  report(6, "inference pooling exactness", pooling_exactness);
  if (wanted(7) || wanted(8)) {
    EndToEnd e;
    std::string error;
    try {
      e = end_to_end();
    } catch (const std::exception& ex) {
      error = ex.what();
    }
    auto guarded = [&](auto fn) {
      return [&, fn] { return error.empty() ? fn(e) : Outcome{false, "error: " + error}; };
    };
    report(7, "end-to-end sampler ordering", guarded(sampler_ordering));
    report(8, "aggregation inference gain", guarded(aggregation_gain));
  }
  report(9, "lambda robustness", lambda_robustness);
  report(10, "CLI determinism", [&] { return cli_determinism(sst_path, work); });
  return failures == 0 ? 0 : 1;
}
