// capforge: enhance image-caption datasets with multi-model generated
// captions, shear them to a token budget, and sanity-check the result
// with corpus stats and a toy contrastive trainer.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "capforge/dataset.hpp"
#include "capforge/errors.hpp"
#include "capforge/gateway.hpp"
#include "capforge/hash.hpp"
#include "capforge/orchestrator.hpp"
#include "capforge/shear.hpp"
#include "capforge/stats.hpp"
#include "capforge/toyclip.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace capforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  return obj;
}

ShearPolicy parse_shear_policy(const json& obj) {
  ShearPolicy policy;
  policy.max_tokens = obj.value("max_tokens", 30);
  policy.min_clause_chars = obj.value("min_clause_chars", 5);
  policy.clause_terminators = obj.value("terminators", ".");
  std::string fallback = obj.value("fallback", "hard-truncate");
  if (fallback == "hard-truncate")
    policy.fallback = ShearFallback::HardTruncate;
  else if (fallback == "reject")
    policy.fallback = ShearFallback::Reject;
  else
    throw ConfigError("unknown shear fallback: " + fallback);
  if (policy.max_tokens < 1) throw ConfigError("shear.max_tokens must be >= 1");
  return policy;
}

GenerationConfig parse_generation(const json& obj) {
  GenerationConfig config;
  config.prompt_template = obj.value("prompt_template", config.prompt_template);
  config.max_new_tokens = obj.value("max_new_tokens", 30);
  config.num_beams = obj.value("num_beams", 1);
  config.do_sample = obj.value("do_sample", false);
  if (obj.contains("temperature") && obj["temperature"].is_number())
    config.temperature = obj["temperature"].get<double>();
  if (obj.contains("top_p") && obj["top_p"].is_number())
    config.top_p = obj["top_p"].get<double>();
  if (obj.contains("min_new_tokens")) config.min_new_tokens = obj["min_new_tokens"].get<int>();
  if (obj.contains("repetition_penalty"))
    config.repetition_penalty = obj["repetition_penalty"].get<double>();
  if (obj.contains("seed")) config.seed = obj["seed"].get<int64_t>();
  if (config.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  return config;
}

std::vector<std::shared_ptr<CaptionerClient>> parse_pool(const json& pool_json,
                                                         std::optional<int64_t> run_seed) {
  if (!pool_json.is_array() || pool_json.empty())
    throw ConfigError("config.pool must be a non-empty array");
  std::vector<std::shared_ptr<CaptionerClient>> pool;
  std::set<std::string> seen;
  for (const auto& entry : pool_json) {
    CaptionerEndpoint endpoint;
    endpoint.model_id = entry.value("model_id", "");
    if (endpoint.model_id.empty()) throw ConfigError("pool entry missing model_id");
    if (!seen.insert(endpoint.model_id).second)
      throw ConfigError("duplicate model_id in pool: " + endpoint.model_id);
    endpoint.base_url = entry.value("base_url", "");
    endpoint.auth_env_var = entry.value("auth_env_var", "");
    std::string protocol = entry.value("protocol", "mock");
    if (protocol == "mock")
      endpoint.protocol = Protocol::Mock;
    else if (protocol == "openai-compat")
      endpoint.protocol = Protocol::OpenAICompat;
    else
      throw ConfigError("unknown protocol: " + protocol);
    if (endpoint.protocol == Protocol::OpenAICompat && endpoint.base_url.empty())
      throw ConfigError("openai-compat endpoint needs base_url: " + endpoint.model_id);
    endpoint.timeout_ms = entry.value("timeout_ms", 30000);
    endpoint.max_in_flight = entry.value("max_in_flight", 4);
    if (endpoint.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (entry.contains("retry")) {
      const auto& r = entry["retry"];
      endpoint.retry.max_attempts = r.value("max_attempts", 3);
      endpoint.retry.backoff_base_ms = r.value("backoff_base_ms", 100);
      endpoint.retry.backoff_jitter_fraction = r.value("backoff_jitter_fraction", 0.1);
      if (r.contains("retryable_statuses"))
        endpoint.retry.retryable_statuses =
            r["retryable_statuses"].get<std::set<int>>();
      if (endpoint.retry.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    }
    GenerationConfig gen = parse_generation(entry.value("generation", json::object()));
    if (!gen.seed && run_seed) gen.seed = *run_seed;
    pool.push_back(std::make_shared<CaptionerClient>(std::move(endpoint), std::move(gen)));
  }
  return pool;
}

ViewPolicy parse_views(const std::string& views) {
  if (views == "raw-only") return {0, false};
  const std::string prefix = "multi:";
  if (views.rfind(prefix, 0) == 0) {
    int k = std::stoi(views.substr(prefix.size()));
    if (k < 1) throw ConfigError("multi:<k> needs k >= 1");
    return {k, false};
  }
  if (views.rfind("sample:", 0) == 0) {
    int k = std::stoi(views.substr(7));
    return {k, true};
  }
  throw ConfigError("unknown view policy: " + views + " (raw-only | multi:<k> | sample:<k>)");
}

TrainConfig parse_train_config(const json& obj) {
  TrainConfig config;
  config.batch_size = obj.value("batch_size", config.batch_size);
  config.temperature = obj.value("temperature", config.temperature);
  config.learning_rate = obj.value("learning_rate", config.learning_rate);
  config.weight_decay = obj.value("weight_decay", config.weight_decay);
  config.epochs = obj.value("epochs", config.epochs);
  config.seed = obj.value("seed", config.seed);
  config.d_out = obj.value("d_out", config.d_out);
  config.use_bias = obj.value("use_bias", config.use_bias);
  std::string opt = obj.value("optimizer", "adamw");
  if (opt == "adamw")
    config.optimizer = Optimizer::AdamW;
  else if (opt == "sgd")
    config.optimizer = Optimizer::SGD;
  else
    throw ConfigError("unknown optimizer: " + opt);
  return config;
}

SyntheticCorpusConfig parse_corpus_config(const json& obj) {
  SyntheticCorpusConfig config;
  config.n_items = obj.value("n_items", config.n_items);
  config.n_eval = obj.value("n_eval", config.n_eval);
  config.latent_dim = obj.value("latent_dim", config.latent_dim);
  config.d_img = obj.value("d_img", config.d_img);
  config.d_txt = obj.value("d_txt", config.d_txt);
  config.k_views = obj.value("k_views", config.k_views);
  config.noise_sigma = obj.value("noise_sigma", config.noise_sigma);
  config.raw_noise_sigma = obj.value("raw_noise_sigma", config.raw_noise_sigma);
  config.eval_noise_sigma = obj.value("eval_noise_sigma", config.eval_noise_sigma);
  config.image_noise_sigma = obj.value("image_noise_sigma", config.image_noise_sigma);
  config.style_bias_magnitude = obj.value("style_bias_magnitude", config.style_bias_magnitude);
  config.seed = obj.value("seed", config.seed);
  return config;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty()) throw ConfigError("expected a non-empty matrix");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c].get<double>();
  return m;
}

void save_params(const EncoderParams& params, double temperature, const std::string& path) {
  json obj = {{"w_img", matrix_to_json(params.w_img)},
              {"w_txt", matrix_to_json(params.w_txt)},
              {"temperature", temperature}};
  if (params.b_img.size() > 0) {
    obj["b_img"] = std::vector<double>(params.b_img.data(), params.b_img.data() + params.b_img.size());
    obj["b_txt"] = std::vector<double>(params.b_txt.data(), params.b_txt.data() + params.b_txt.size());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << obj.dump() << '\n';
}

EncoderParams load_params(const std::string& path) {
  json obj = load_json_file(path);
  EncoderParams params;
  params.w_img = matrix_from_json(obj.at("w_img"));
  params.w_txt = matrix_from_json(obj.at("w_txt"));
  if (obj.contains("b_img")) {
    auto bi = obj["b_img"].get<std::vector<double>>();
    auto bt = obj["b_txt"].get<std::vector<double>>();
    params.b_img = Eigen::Map<Eigen::VectorXd>(bi.data(), static_cast<Eigen::Index>(bi.size()));
    params.b_txt = Eigen::Map<Eigen::VectorXd>(bt.data(), static_cast<Eigen::Index>(bt.size()));
  }
  return params;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

// {"id","image_vec":[...],"text_vecs":[[...],...]} per line
SyntheticCorpus corpus_from_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file: " + path);
  SyntheticCorpus corpus;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded()) throw MalformedLine(line_no, "not valid JSON");
    if (!obj.contains("image_vec")) throw MissingField(line_no, "image_vec");
    if (!obj.contains("text_vecs") || !obj["text_vecs"].is_array() || obj["text_vecs"].empty())
      throw MissingField(line_no, "text_vecs");
    CorpusItem item;
    item.image = vector_from_json(obj["image_vec"]);
    item.raw_text = vector_from_json(obj["text_vecs"][0]);
    for (size_t k = 1; k < obj["text_vecs"].size(); ++k)
      item.views.push_back(vector_from_json(obj["text_vecs"][k]));
    corpus.train.push_back(std::move(item));
  }
  if (corpus.train.empty()) throw EmptyCorpus();
  corpus.d_img = static_cast<int>(corpus.train[0].image.size());
  corpus.d_txt = static_cast<int>(corpus.train[0].raw_text.size());
  return corpus;
}

std::vector<EvalPair> eval_pairs_from_features(const std::string& path) {
  SyntheticCorpus corpus = corpus_from_features(path);
  std::vector<EvalPair> pairs;
  for (const auto& item : corpus.train) pairs.push_back({item.image, item.raw_text});
  return pairs;
}

json report_to_json(const RetrievalReport& report) {
  return {{"direction", to_string(report.direction)},
          {"r1", report.r1},
          {"r5", report.r5},
          {"r10", report.r10},
          {"mdr", report.mdr}};
}

std::vector<double> parse_grid(const std::string& grid) {
  std::vector<double> out;
  std::stringstream ss(grid);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  if (out.empty()) throw ConfigError("empty grid");
  return out;
}

int cmd_enhance(const std::string& config_path, bool resume,
                std::optional<int> shards_override, std::optional<int> workers_override) {
  json config = load_json_file(config_path);
  std::string input = config.value("input", "");
  std::string out_dir = config.value("output_dir", "");
  if (input.empty() || out_dir.empty())
    throw ConfigError("config needs 'input' and 'output_dir'");
  if (!fs::exists(input)) throw ConfigError("input does not exist: " + input);

  OrchestratorOptions options;
  json shear_json = config.value("shear", json::object());
  options.shear = parse_shear_policy(shear_json);
  options.tokenizer.lowercase = config.value("tokenizer_lowercase", false);
  options.image_root = config.value("image_root", fs::path(input).parent_path().string());
  std::string drop = config.value("drop_policy", "drop");
  if (drop == "drop")
    options.drop_policy = DropPolicy::Drop;
  else if (drop == "keep")
    options.drop_policy = DropPolicy::Keep;
  else
    throw ConfigError("unknown drop_policy: " + drop);

  std::optional<int64_t> run_seed;
  if (config.contains("seed")) run_seed = config["seed"].get<int64_t>();
  auto pool = parse_pool(config.value("pool", json::array()), run_seed);

  if (shear_json.value("auto_limit", false)) {
    std::vector<std::string> captions;
    for (const auto& a : read_annotations(input)) captions.push_back(a.caption);
    options.shear.max_tokens = compute_shear_limit(captions, options.tokenizer);
    std::cerr << "auto shear limit T=" << options.shear.max_tokens << "\n";
  }

  size_t shards = shards_override ? static_cast<size_t>(*shards_override)
                                  : config.value("shards", size_t{1});
  size_t workers = workers_override ? static_cast<size_t>(*workers_override)
                                    : config.value("workers", size_t{1});
  if (shards < 1) throw ConfigError("shards must be >= 1");

  fs::create_directories(out_dir);
  auto [manifest, report] =
      run_enhance(input, out_dir, out_dir + "/enhanced.jsonl", pool, options, shards,
                  workers, resume);
  std::cout << "enhanced " << manifest.entry_count << " entries ("
            << report.images_dropped << " dropped, "
            << report.captions_generated << " captions) -> " << out_dir
            << "/enhanced.jsonl\n";
  bool had_failures = !report.per_model_failures.empty() || report.images_dropped > 0;
  if (had_failures) {
    for (const auto& [model, n] : report.per_model_failures)
      std::cerr << "  failures[" << model << "] = " << n << "\n";
    for (size_t line : report.dropped_lines) std::cerr << "  dropped line " << line << "\n";
  }
  return kExitOk;
}

int cmd_plan(const std::string& input, size_t shards) {
  ShardPlan plan = plan_shards(input, shards);
  json out = json::array();
  for (size_t i = 0; i < plan.shard_count(); ++i) {
    out.push_back({{"shard", i},
                   {"start", plan.boundaries[i].first},
                   {"end", plan.boundaries[i].second}});
  }
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_stats(const std::string& dataset, bool lengths, bool wordfreq, size_t top_n,
              bool similarity, const std::string& provider_kind, const std::string& provider_url,
              size_t dim, const std::string& pairing_name, const std::string& out_dir,
              const std::string& embeddings_out, uint64_t seed) {
  auto entries = read_enhanced(dataset);
  fs::create_directories(out_dir);

  LengthStats length_result;
  WordFrequencyTable word_result;
  std::optional<SimilarityDistribution> sim_result;

  if (lengths || (!wordfreq && !similarity)) length_result = length_stats(entries);
  if (wordfreq) {
    word_result = word_frequency(entries, top_n);
    export_wordcloud_counts(word_result, out_dir);
  }

  std::unique_ptr<EmbeddingProvider> provider;
  if (similarity || !embeddings_out.empty()) {
    if (provider_kind == "hasher")
      provider = std::make_unique<HashedEmbeddingProvider>(dim, seed);
    else if (provider_kind == "http")
      provider = std::make_unique<HttpEmbeddingProvider>(provider_url, dim);
    else
      throw ConfigError("unknown provider: " + provider_kind);
  }
  SimilarityPairing pairing =
      pairing_name == "all" ? SimilarityPairing::AllGenerated : SimilarityPairing::RawOnly;
  if (similarity) sim_result = similarity_distribution(entries, *provider, pairing);
  if (!embeddings_out.empty())
    export_embeddings(entries, *provider, pairing, embeddings_out);

  std::string stats_path = out_dir + "/stats.json";
  std::ofstream out(stats_path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + stats_path);
  out << stats_to_json(length_result, word_result, sim_result) << '\n';
  std::cout << "wrote " << stats_path << "\n";
  return kExitOk;
}

int cmd_shear(const std::string& input, const std::string& output, int max_tokens,
              int min_clause_chars, const std::string& fallback, bool auto_limit) {
  ShearPolicy policy;
  policy.max_tokens = max_tokens;
  policy.min_clause_chars = min_clause_chars;
  policy.fallback =
      fallback == "reject" ? ShearFallback::Reject : ShearFallback::HardTruncate;
  TokenizerSpec spec;

  std::ifstream in(input);
  if (!in) throw ConfigError("cannot open input: " + input);
  std::vector<std::string> captions;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) captions.push_back(line);
  if (auto_limit) {
    policy.max_tokens = compute_shear_limit(captions, spec);
    std::cerr << "auto shear limit T=" << policy.max_tokens << "\n";
  }

  std::ostream* out = &std::cout;
  std::ofstream file_out;
  if (!output.empty()) {
    file_out.open(output, std::ios::trunc);
    if (!file_out) throw IoError("cannot open output: " + output);
    out = &file_out;
  }
  for (const auto& caption : captions)
    *out << shear_caption(caption, policy, spec).text << '\n';
  return kExitOk;
}

int cmd_train_toy(const std::string& config_path, const std::string& views,
                  const std::string& out_dir) {
  json config = config_path.empty() ? json::object() : load_json_file(config_path);
  TrainConfig train_config = parse_train_config(config.value("train", json::object()));
  SyntheticCorpusConfig corpus_config = parse_corpus_config(config.value("corpus", json::object()));
  ViewPolicy policy = parse_views(!views.empty() ? views : config.value("views", "multi:4"));

  SyntheticCorpus corpus;
  if (config.contains("features")) {
    corpus = corpus_from_features(config["features"].get<std::string>());
  } else {
    corpus = make_synthetic_corpus(corpus_config);
  }

  TrainResult result = train(corpus, train_config, policy);
  fs::create_directories(out_dir);
  save_params(result.params, train_config.temperature, out_dir + "/params.json");
  std::ofstream trace(out_dir + "/trace.csv", std::ios::trunc);
  trace << "step,loss\n";
  for (size_t i = 0; i < result.loss_trace.size(); ++i)
    trace << i << ',' << result.loss_trace[i] << '\n';

  if (!corpus.eval.empty()) {
    auto pairs = eval_pairs_from_corpus(corpus);
    json reports = {report_to_json(eval_retrieval(result.params, pairs, Direction::I2T)),
                    report_to_json(eval_retrieval(result.params, pairs, Direction::T2I))};
    std::ofstream rep(out_dir + "/retrieval.json", std::ios::trunc);
    rep << reports.dump(2) << '\n';
  }
  std::cout << "trained " << result.loss_trace.size() << " steps; params -> " << out_dir
            << "/params.json\n";
  return kExitOk;
}

int cmd_eval(const std::string& params_path, const std::string& features_path,
             const std::string& config_path, const std::string& out_path) {
  EncoderParams params = load_params(params_path);
  std::vector<EvalPair> pairs;
  if (!features_path.empty()) {
    pairs = eval_pairs_from_features(features_path);
  } else if (!config_path.empty()) {
    json config = load_json_file(config_path);
    SyntheticCorpus corpus =
        make_synthetic_corpus(parse_corpus_config(config.value("corpus", json::object())));
    pairs = eval_pairs_from_corpus(corpus);
  } else {
    throw ConfigError("eval needs --features or --config");
  }
  json reports = {report_to_json(eval_retrieval(params, pairs, Direction::I2T)),
                  report_to_json(eval_retrieval(params, pairs, Direction::T2I))};
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + out_path);
  out << reports.dump(2) << '\n';
  std::cout << reports.dump(2) << "\n";
  return kExitOk;
}

int cmd_ablate(const std::string& axis_name, const std::string& grid_str,
               const std::string& seeds_str, const std::string& config_path,
               const std::string& out_path) {
  AblationAxis axis;
  if (axis_name == "caption-noise-length")
    axis = AblationAxis::CaptionNoiseLength;
  else if (axis_name == "batch-size")
    axis = AblationAxis::BatchSize;
  else if (axis_name == "num-views")
    axis = AblationAxis::NumViews;
  else if (axis_name == "epochs")
    axis = AblationAxis::Epochs;
  else
    throw ConfigError("unknown axis: " + axis_name);

  std::vector<double> grid = parse_grid(grid_str);
  std::vector<uint64_t> seeds;
  for (double s : parse_grid(seeds_str)) seeds.push_back(static_cast<uint64_t>(s));

  json config = config_path.empty() ? json::object() : load_json_file(config_path);
  TrainConfig train_config = parse_train_config(config.value("train", json::object()));
  SyntheticCorpusConfig corpus_config = parse_corpus_config(config.value("corpus", json::object()));

  auto rows = ablation_sweep(axis, grid, train_config, corpus_config, seeds);
  std::string csv = ablation_to_csv(rows);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + out_path);
    out << csv;
    std::cout << "wrote " << rows.size() << " rows -> " << out_path << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caption enhancement pipeline"};
  app.require_subcommand(1);

  // enhance
  auto* enhance = app.add_subcommand("enhance", "run the captioning pipeline end to end");
  std::string config_path;
  bool resume = false;
  std::optional<int> shards_flag, workers_flag;
  enhance->add_option("--config", config_path, "run config JSON")->required();
  enhance->add_flag("--resume", resume, "resume from shard checkpoints");
  enhance->add_option("--shards", shards_flag, "override config.shards");
  enhance->add_option("--workers", workers_flag, "override config.workers");

  // plan
  auto* plan = app.add_subcommand("plan", "dry-run shard plan");
  std::string plan_input;
  size_t plan_shards_n = 1;
  plan->add_option("--input", plan_input, "annotation file")->required();
  plan->add_option("--shards", plan_shards_n, "shard count")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "corpus diagnostics on an enhanced dataset");
  std::string stats_dataset, provider_kind = "hasher", provider_url, pairing = "raw";
  std::string stats_out = "stats_out", embeddings_out;
  bool lengths = false, wordfreq = false, similarity = false;
  size_t top_n = 50, embed_dim = 64;
  uint64_t stats_seed = 0;
  stats->add_option("--dataset", stats_dataset, "enhanced dataset (jsonl)")->required();
  stats->add_flag("--lengths", lengths, "caption length statistics");
  stats->add_flag("--wordfreq", wordfreq, "word frequency tables + CSV export");
  stats->add_option("--top", top_n, "top-N words");
  stats->add_flag("--similarity", similarity, "image-text cosine similarity distribution");
  stats->add_option("--provider", provider_kind, "hasher | http");
  stats->add_option("--provider-url", provider_url, "embedding service base URL");
  stats->add_option("--dim", embed_dim, "embedding dimension");
  stats->add_option("--pairing", pairing, "raw | all");
  stats->add_option("--out", stats_out, "output directory");
  stats->add_option("--export-embeddings", embeddings_out, "embeddings jsonl path");
  stats->add_option("--seed", stats_seed, "hasher seed");

  // shear
  auto* shear = app.add_subcommand("shear", "one-shot shearing of a caption file");
  std::string shear_input, shear_output, shear_fallback = "hard-truncate";
  int shear_max_tokens = 30, shear_min_chars = 5;
  bool shear_auto = false;
  shear->add_option("--input", shear_input, "captions, one per line")->required();
  shear->add_option("--output", shear_output, "output path (default stdout)");
  shear->add_option("--max-tokens", shear_max_tokens, "token limit T");
  shear->add_option("--min-clause-chars", shear_min_chars, "minimum clause length");
  shear->add_option("--fallback", shear_fallback, "hard-truncate | reject");
  shear->add_flag("--auto-limit", shear_auto, "T = mean token count of the input");

  // train-toy
  auto* train_toy = app.add_subcommand("train-toy", "train the toy dual encoder");
  std::string toy_config, toy_views, toy_out = "toy_out";
  train_toy->add_option("--config", toy_config, "toy config JSON");
  train_toy->add_option("--views", toy_views, "raw-only | multi:<k> | sample:<k>");
  train_toy->add_option("--out", toy_out, "output directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "retrieval evaluation of trained params");
  std::string eval_params, eval_features, eval_config, eval_out = "retrieval.json";
  eval_cmd->add_option("--params", eval_params, "params.json from train-toy")->required();
  eval_cmd->add_option("--features", eval_features, "eval feature file (jsonl)");
  eval_cmd->add_option("--config", eval_config, "toy config JSON (synthetic eval set)");
  eval_cmd->add_option("--out", eval_out, "report path");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "grid sweep over one training axis");
  std::string ablate_axis, ablate_grid, ablate_seeds = "0,1,2,3,4,5,6,7,8,9";
  std::string ablate_config, ablate_out;
  ablate->add_option("--axis", ablate_axis,
                     "caption-noise-length | batch-size | num-views | epochs")
      ->required();
  ablate->add_option("--grid", ablate_grid, "comma-separated settings")->required();
  ablate->add_option("--seeds", ablate_seeds, "comma-separated seeds");
  ablate->add_option("--config", ablate_config, "toy config JSON");
  ablate->add_option("--out", ablate_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (enhance->parsed())
      return cmd_enhance(config_path, resume, shards_flag, workers_flag);
    if (plan->parsed()) return cmd_plan(plan_input, plan_shards_n);
    if (stats->parsed())
      return cmd_stats(stats_dataset, lengths, wordfreq, top_n, similarity, provider_kind,
                       provider_url, embed_dim, pairing, stats_out, embeddings_out, stats_seed);
    if (shear->parsed())
      return cmd_shear(shear_input, shear_output, shear_max_tokens, shear_min_chars,
                       shear_fallback, shear_auto);
    if (train_toy->parsed()) return cmd_train_toy(toy_config, toy_views, toy_out);
    if (eval_cmd->parsed()) return cmd_eval(eval_params, eval_features, eval_config, eval_out);
    if (ablate->parsed())
      return cmd_ablate(ablate_axis, ablate_grid, ablate_seeds, ablate_config, ablate_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
