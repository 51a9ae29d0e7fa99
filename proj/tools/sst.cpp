// sst: command-line front end for the subtopic sampling pipeline.
//
// Every command reads an optional JSON config (--config), takes its seed from
// --seed (else the first configured seed) and writes CSV/JSON/JSONL files
// under --out.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sst/evalcli.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sst;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "sst-out";
};

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  validate(cfg);
  return cfg;
}

std::uint64_t seed_of(const Globals& g, const ExperimentConfig& cfg) {
  return g.seed ? *g.seed : cfg.seeds.front();
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out);
  return fs::path(g.out);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> pair_ids(const std::vector<DocumentPair>& pairs) {
  std::vector<std::string> ids;
  for (const auto& p : pairs) ids.push_back(p.id());
  return ids;
}

std::string partitions_text(const std::vector<DocumentPair>& pairs, const std::vector<SubtopicPartition>& parts) {
  std::ostringstream s;
  write_partitions_jsonl(s, pair_ids(pairs), parts);
  return s.str();
}

// Partitions from a file written by `cluster`, checked against the split.
std::vector<SubtopicPartition> read_partitions(const std::string& path, const std::vector<DocumentPair>& pairs) {
  std::istringstream in(read_file(path));
  const auto parsed = parse_partitions_jsonl(in);
  if (parsed.size() != pairs.size()) {
    throw Error(ErrorKind::kDimensionMismatch, path + ": " + std::to_string(parsed.size()) + " partitions for " +
                                                   std::to_string(pairs.size()) + " pairs");
  }
  std::vector<SubtopicPartition> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [id, part] = parsed[i];
    if (id != pairs[i].id() || part.split != pairs[i].query.size() ||
        part.assignment.size() != pairs[i].query.size() + pairs[i].candidate.size()) {
      throw Error(ErrorKind::kDimensionMismatch, path + ": partition " + std::to_string(i + 1) +
                                                     " does not fit pair " + pairs[i].id());
    }
    out.push_back(part);
  }
  return out;
}

struct PartitionFiles {
  std::string train;
  std::string test;
};

Clustering clustering_for(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed,
                          const PartitionFiles& files) {
  if (cfg.sampler == SamplerKind::kRandom) return {};
  if (files.train.empty() && files.test.empty()) return cluster_data(cfg, data, seed);
  if (files.train.empty() || files.test.empty()) {
    throw Error(ErrorKind::kConfigError, "give partitions for both splits or for neither");
  }
  Clustering c;
  c.train = read_partitions(files.train, data.train);
  c.test = read_partitions(files.test, data.test);
  return c;
}

void add_partition_options(CLI::App* app, PartitionFiles& files) {
  app->add_option("--train-partitions", files.train, "training partitions from `cluster` (JSONL)");
  app->add_option("--test-partitions", files.test, "test partitions from `cluster` (JSONL)");
}

std::string topics_text(const std::vector<DocumentPair>& pairs, const std::vector<TopicMap>& topics) {
  std::ostringstream s;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    ordered_json j;
    j["pair_id"] = pairs[i].id();
    j["query"] = topics[i].query;
    j["candidate"] = topics[i].candidate;
    s << j.dump() << '\n';
  }
  return s.str();
}

std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::ostringstream s;
  s << "epoch,loss,metric\n";
  for (const auto& r : curve) s << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.metric) << '\n';
  return s.str();
}

std::string head_curve_csv(const std::vector<double>& curve) {
  std::ostringstream s;
  s << "epoch,heldout_lp\n";
  for (std::size_t e = 0; e < curve.size(); ++e) s << e + 1 << ',' << format_double(curve[e]) << '\n';
  return s.str();
}

std::string warnings_text(const std::vector<std::string>& warnings) {
  std::string s;
  for (const auto& w : warnings) s += w + '\n';
  return s;
}

double mean_ari(const std::vector<SubtopicPartition>& parts, const std::vector<TopicMap>& topics) {
  if (parts.empty() || parts.size() != topics.size()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::vector<int> truth = topics[i].query;
    truth.insert(truth.end(), topics[i].candidate.begin(), topics[i].candidate.end());
    sum += adjusted_rand_index(parts[i].assignment, truth);
  }
  return sum / static_cast<double>(parts.size());
}

// ---------------------------------------------------------------------------

void cmd_segment(const Globals& g, const std::string& input, std::string id, bool strip) {
  if (id.empty()) id = fs::path(input).stem().string();
  const auto doc = segment(read_file(input), id, TokenizerOptions{strip});
  ordered_json j;
  j["id"] = doc.id;
  j["sentences"] = ordered_json::array();
  for (const auto& s : doc.sentences) {
    ordered_json sj;
    sj["index"] = s.index;
    sj["text"] = s.text;
    sj["tokens"] = s.tokens;
    j["sentences"].push_back(sj);
  }
  write_file(out_dir(g) / "segments.json", j.dump(2) + "\n");
}

void cmd_synth(const Globals& g) {
  const auto cfg = load(g);
  const auto seed = seed_of(g, cfg);
  auto cfg_synth = cfg;
  cfg_synth.data = {};
  cfg_synth.receptive_field = std::numeric_limits<std::size_t>::max();
  const auto data = prepare_data(cfg_synth, seed);
  const auto dir = out_dir(g);
  std::ostringstream train, test;
  write_pairs(train, data.train);
  write_pairs(test, data.test);
  write_file(dir / "train.jsonl", train.str());
  write_file(dir / "test.jsonl", test.str());
  write_file(dir / "train_topics.jsonl", topics_text(data.train, data.train_topics));
  write_file(dir / "test_topics.jsonl", topics_text(data.test, data.test_topics));
  ordered_json spec = to_json(cfg.synthetic.spec);
  spec["seed"] = seed;
  spec["train_pairs"] = data.train.size();
  spec["test_pairs"] = data.test.size();
  write_file(dir / "synth.json", spec.dump(2) + "\n");
}

void cmd_cluster(const Globals& g, const std::string& variant) {
  auto cfg = load(g);
  cfg.clustering = variant == "adaptive" ? ClusteringKind::kAdaptive : ClusteringKind::kDirect;
  if (cfg.sampler == SamplerKind::kRandom) cfg.sampler = SamplerKind::kSoft;
  const auto seed = seed_of(g, cfg);
  const auto data = prepare_data(cfg, seed);
  const auto c = cluster_data(cfg, data, seed);
  const auto dir = out_dir(g);
  write_file(dir / "train_partitions.jsonl", partitions_text(data.train, c.train));
  write_file(dir / "test_partitions.jsonl", partitions_text(data.test, c.test));
  if (c.head) {
    write_file(dir / "head.json", head_to_json(*c.head) + "\n");
    write_file(dir / "head_curve.csv", head_curve_csv(c.head_curve));
  }
  ordered_json summary;
  summary["seed"] = seed;
  summary["clustering"] = variant;
  summary["train_pairs"] = c.train.size();
  summary["test_pairs"] = c.test.size();
  if (!data.train_topics.empty()) {
    summary["train_ari"] = mean_ari(c.train, data.train_topics);
    summary["test_ari"] = mean_ari(c.test, data.test_topics);
  }
  summary["warnings"] = c.warnings.size();
  write_file(dir / "cluster.json", summary.dump(2) + "\n");
  write_file(dir / "warnings.txt", warnings_text(c.warnings));
}

void cmd_train_head(const Globals& g) {
  auto cfg = load(g);
  cfg.clustering = ClusteringKind::kAdaptive;
  if (cfg.sampler == SamplerKind::kRandom) cfg.sampler = SamplerKind::kSoft;
  const auto seed = seed_of(g, cfg);
  const auto data = prepare_data(cfg, seed);
  const auto c = cluster_data(cfg, data, seed);
  const auto dir = out_dir(g);
  write_file(dir / "head.json", head_to_json(*c.head) + "\n");
  write_file(dir / "head_curve.csv", head_curve_csv(c.head_curve));
}

void cmd_sample(const Globals& g, const std::string& split, const PartitionFiles& files) {
  const auto cfg = load(g);
  const auto seed = seed_of(g, cfg);
  const auto data = prepare_data(cfg, seed);
  const auto c = clustering_for(cfg, data, seed, files);
  const bool train = split == "train";
  const auto& pairs = train ? data.train : data.test;
  const auto& parts = train ? c.train : c.test;
  const std::size_t pool_size = train ? cfg.epochs : cfg.inference_pool;
  std::ostringstream views;
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const SubtopicPartition empty;
    const auto pool = build_view_pool(pairs[i], parts.empty() ? empty : parts[i], cfg.sampler, pool_size, data.k, seed,
                                      train ? "train" : "infer");
    write_view_pool_jsonl(views, pool);
    warnings.insert(warnings.end(), pool.warnings.begin(), pool.warnings.end());
  }
  const auto dir = out_dir(g);
  write_file(dir / (split + "_views.jsonl"), views.str());
  write_file(dir / "warnings.txt", warnings_text(warnings));
}

void cmd_train(const Globals& g, const std::string& matcher, const PartitionFiles& files) {
  auto cfg = load(g);
  if (!matcher.empty()) cfg.task = matcher == "rank" ? TaskKind::kRank : TaskKind::kClassify;
  const auto seed = seed_of(g, cfg);
  const auto data = prepare_data(cfg, seed);
  const auto c = clustering_for(cfg, data, seed, files);
  const auto trained = train_matcher(cfg, data, c, seed);
  const auto dir = out_dir(g);
  write_file(dir / "params.json", matcher_to_json(trained) + "\n");
  write_file(dir / "curve.csv", curve_csv(trained.curve));
  write_file(dir / "warnings.txt", warnings_text(trained.warnings));
}

void cmd_infer(const Globals& g, const std::string& mode, const std::string& params_path,
               const PartitionFiles& files) {
  auto cfg = load(g);
  cfg.task = mode == "rank" ? TaskKind::kRank : TaskKind::kClassify;
  const auto seed = seed_of(g, cfg);
  const auto data = prepare_data(cfg, seed);
  const auto c = clustering_for(cfg, data, seed, files);
  const auto matcher = matcher_from_json(read_file(params_path));
  const auto result = evaluate_matcher(cfg, data, c, matcher, seed);
  const auto dir = out_dir(g);
  if (cfg.task == TaskKind::kClassify) {
    std::ostringstream csv;
    csv << "pair_id,label,score,prediction\n";
    for (std::size_t i = 0; i < result.scores.size(); ++i) {
      csv << result.scores[i].first << ',' << data.test[i].label << ',' << format_double(result.scores[i].second)
          << ',' << (result.scores[i].second >= cfg.threshold ? 1 : 0) << '\n';
    }
    write_file(dir / "predictions.csv", csv.str());
  } else {
    std::ostringstream run, qrels;
    write_run(run, result.run);
    Qrels judged;
    for (const auto& p : data.test) judged[p.query.id][p.candidate.id] = p.label;
    write_qrels(qrels, judged);
    write_file(dir / "run.txt", run.str());
    write_file(dir / "qrels.txt", qrels.str());
  }
}

// predictions.csv: pair_id,label,score[,prediction] with a header line.
ClassificationReport eval_predictions(const std::string& path, double threshold) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() < 3) throw Error(ErrorKind::kParseError, path + ": expected pair_id,label,score", line_no);
    try {
      labels.push_back(std::stoi(fields[1]));
      scores.push_back(std::stod(fields[2]));
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParseError, path + ": bad number", line_no);
    }
  }
  return classification_metrics(scores, labels, threshold);
}

void cmd_eval(const Globals& g, const std::string& predictions, const std::string& run_path,
              const std::string& qrels_path) {
  const auto cfg = load(g);
  ordered_json report;
  if (!predictions.empty()) {
    const auto r = eval_predictions(predictions, cfg.threshold);
    report["accuracy"] = r.accuracy;
    report["precision"] = r.precision;
    report["recall"] = r.recall;
    report["f1"] = r.f1;
    report["tp"] = r.tp;
    report["fp"] = r.fp;
    report["tn"] = r.tn;
    report["fn"] = r.fn;
  } else {
    if (run_path.empty() || qrels_path.empty()) {
      throw Error(ErrorKind::kConfigError, "eval needs --predictions, or --run with --qrels");
    }
    std::istringstream run_in(read_file(run_path));
    std::istringstream qrels_in(read_file(qrels_path));
    const auto r = ndcg(parse_run(run_in), parse_qrels(qrels_in), cfg.ndcg_cutoffs);
    for (const auto& [k, v] : r.ndcg_at) report["ndcg@" + std::to_string(k)] = v;
  }
  write_file(out_dir(g) / "eval.json", report.dump(2) + "\n");
}

std::vector<std::uint64_t> seeds_for(const Globals& g, const ExperimentConfig& cfg) {
  return g.seed ? std::vector<std::uint64_t>{*g.seed} : cfg.seeds;
}

void cmd_sweep(const Globals& g, std::vector<double> values) {
  const auto cfg = load(g);
  if (values.empty()) values = cfg.lambda_values;
  const auto report = lambda_sweep(cfg, values, seeds_for(g, cfg));
  const auto dir = out_dir(g);
  std::ostringstream csv;
  write_sweep_csv(csv, report);
  write_file(dir / "sweep.csv", csv.str());
  std::ostringstream rows;
  rows << "lambda,seed,metric\n";
  for (const auto& r : report.rows) rows << format_double(r.lambda) << ',' << r.seed << ',' << format_double(r.metric) << '\n';
  write_file(dir / "sweep_seeds.csv", rows.str());
  ordered_json j;
  j["spread"] = report.spread;
  j["means"] = ordered_json::array();
  for (const auto& [lambda, m] : report.means) j["means"].push_back({{"lambda", lambda}, {"metric", m}});
  write_file(dir / "sweep.json", j.dump(2) + "\n");
}

void cmd_ranges(const Globals& g) {
  const auto cfg = load(g);
  std::ostringstream csv;
  write_ranges_csv(csv, analyze_ranges(cfg, seed_of(g, cfg)));
  write_file(out_dir(g) / "ranges.csv", csv.str());
}

void cmd_report(const Globals& g) {
  const auto cfg = load(g);
  const auto dir = out_dir(g);
  std::ostringstream csv;
  csv << "seed,metric\n";
  std::vector<double> metrics;
  for (const auto seed : seeds_for(g, cfg)) {
    const auto result = run_experiment(cfg, seed, (dir / ("seed-" + std::to_string(seed))).string());
    metrics.push_back(result.headline(cfg));
    csv << seed << ',' << format_double(metrics.back()) << '\n';
  }
  write_file(dir / "summary.csv", csv.str());
  const double mean = std::accumulate(metrics.begin(), metrics.end(), 0.0) / static_cast<double>(metrics.size());
  double var = 0.0;
  for (double m : metrics) var += (m - mean) * (m - mean);
  ordered_json j;
  j["task"] = to_string(cfg.task);
  j["sampler"] = to_string(cfg.sampler);
  j["seeds"] = metrics.size();
  j["mean"] = mean;
  j["std"] = metrics.size() > 1 ? std::sqrt(var / static_cast<double>(metrics.size() - 1)) : 0.0;
  write_file(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subtopic sampling for long-document matching"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "seed (default: first seed in the config)");
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  std::string input, doc_id;
  bool strip = false;
  auto* segment_cmd = app.add_subcommand("segment", "split raw text into sentences and tokens");
  segment_cmd->add_option("--input", input, "raw text file")->required()->check(CLI::ExistingFile);
  segment_cmd->add_option("--id", doc_id, "document id (default: file stem)");
  segment_cmd->add_flag("--strip-suffixes", strip, "apply the suffix stripper");

  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic pair corpus");

  std::string variant;
  auto* cluster_cmd = app.add_subcommand("cluster", "partition every pair into subtopics");
  cluster_cmd->add_option("variant", variant, "direct or adaptive")
      ->required()
      ->check(CLI::IsMember({"direct", "adaptive"}));

  auto* head_cmd = app.add_subcommand("train-head", "train the adaptive clustering head");

  std::string split = "train";
  PartitionFiles sample_files, train_files, infer_files;
  auto* sample_cmd = app.add_subcommand("sample", "dump sampled view pools as JSONL");
  sample_cmd->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  add_partition_options(sample_cmd, sample_files);

  std::string matcher;
  auto* train_cmd = app.add_subcommand("train", "train the matcher with temporal aggregation");
  train_cmd->add_option("--matcher", matcher, "classify or rank (default: config task)")
      ->check(CLI::IsMember({"classify", "rank"}));
  add_partition_options(train_cmd, train_files);

  std::string mode, params_path;
  auto* infer_cmd = app.add_subcommand("infer", "aggregation inference on the test split");
  infer_cmd->add_option("mode", mode, "classify or rank")->required()->check(CLI::IsMember({"classify", "rank"}));
  infer_cmd->add_option("--params", params_path, "matcher parameters from `train`")
      ->required()
      ->check(CLI::ExistingFile);
  add_partition_options(infer_cmd, infer_files);

  std::string predictions, run_path, qrels_path;
  auto* eval_cmd = app.add_subcommand("eval", "metrics for predictions or a run");
  eval_cmd->add_option("--predictions", predictions, "predictions.csv from `infer classify`")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--run", run_path, "TREC run from `infer rank`")->check(CLI::ExistingFile);
  eval_cmd->add_option("--qrels", qrels_path, "TREC qrels")->check(CLI::ExistingFile);

  std::vector<double> lambdas;
  auto* sweep_cmd = app.add_subcommand("sweep-lambda", "downstream metric per lambda with adaptive clustering");
  sweep_cmd->add_option("--values", lambdas, "lambda values (default: config)");

  auto* ranges_cmd = app.add_subcommand("analyze-ranges", "accuracy against view-range size");
  auto* report_cmd = app.add_subcommand("report", "full pipeline for each seed plus a summary");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (*segment_cmd) cmd_segment(g, input, doc_id, strip);
    if (*synth_cmd) cmd_synth(g);
    if (*cluster_cmd) cmd_cluster(g, variant);
    if (*head_cmd) cmd_train_head(g);
    if (*sample_cmd) cmd_sample(g, split, sample_files);
    if (*train_cmd) cmd_train(g, matcher, train_files);
    if (*infer_cmd) cmd_infer(g, mode, params_path, infer_files);
    if (*eval_cmd) cmd_eval(g, predictions, run_path, qrels_path);
    if (*sweep_cmd) cmd_sweep(g, lambdas);
    if (*ranges_cmd) cmd_ranges(g);
    if (*report_cmd) cmd_report(g);
  } catch (const Error& e) {
    std::cerr << "sst: " << to_string(e.kind()) << ": " << e.what();
    if (e.line() > 0) std::cerr << " (line " << e.line() << ")";
    std::cerr << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "sst: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
