// Acceptance gate: one pass/fail line per criterion, nonzero exit on
// any failure. Tolerances and runtime budgets are pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/errors.hpp"
#include "capforge/gateway.hpp"
#include "capforge/hash.hpp"
#include "capforge/orchestrator.hpp"
#include "capforge/shear.hpp"
#include "capforge/stats.hpp"
#include "capforge/toyclip.hpp"

using namespace capforge;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string detail;

  void require(bool condition, const std::string& message) {
    if (!condition && ok) {
      ok = false;
      detail = message;
    }
  }
};

int g_failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Check&)>& fn) {
  Check check;
  auto started = std::chrono::steady_clock::now();
  try {
    fn(check);
  } catch (const std::exception& e) {
    check.require(false, std::string("exception: ") + e.what());
  }
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  check.require(elapsed < budget_s, "runtime budget exceeded");
  if (check.ok) {
    std::printf("PASS  %-28s (%.2fs)\n", name.c_str(), elapsed);
  } else {
    std::printf("FAIL  %-28s (%.2fs): %s\n", name.c_str(), elapsed, check.detail.c_str());
    ++g_failures;
  }
  std::fflush(stdout);
}

std::string random_string(SplitMix64& rng) {
  static const char* words[] = {"cat", "dog",  "park", "bench", "sky",  "a",
                                "the", "man",  "hat",  "red",   "blue", "walks",
                                "sees", "tiny", "big",  "x",     "yz"};
  static const char* punct = ".,;:!?\"()-";
  std::string out;
  size_t parts = rng.next_below(40);
  for (size_t i = 0; i < parts; ++i) {
    switch (rng.next_below(5)) {
      case 0: out += punct[rng.next_below(10)]; break;
      case 1: out += "  "; break;
      default: out += words[rng.next_below(17)]; break;
    }
    if (rng.next_below(3)) out += ' ';
  }
  return out;
}

Eigen::MatrixXd random_matrix(SplitMix64& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = 2.0 * rng.next_double() - 1.0;
  return m;
}

Eigen::MatrixXd normalize_rows(Eigen::MatrixXd m) {
  for (int i = 0; i < m.rows(); ++i) {
    double n = m.row(i).norm();
    if (n > 0) m.row(i) /= n;
  }
  return m;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("capforge_accept_" + hex64(SplitMix64(::getpid() + clock()).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::shared_ptr<CaptionerClient>> mock_pool() {
  std::vector<std::shared_ptr<CaptionerClient>> pool;
  for (const char* id : {"minigpt4", "llava", "otter", "qwen-vl"}) {
    CaptionerEndpoint endpoint;
    endpoint.model_id = id;
    endpoint.protocol = Protocol::Mock;
    pool.push_back(std::make_shared<CaptionerClient>(endpoint, GenerationConfig{}));
  }
  return pool;
}

std::string write_fixture(const TempDir& dir, int n) {
  std::string ann;
  for (int i = 0; i < n; ++i) {
    std::string image = "images/img" + std::to_string(i) + ".jpg";
    write_file(dir.sub(image), "jpegbytes-" + std::to_string(i));
    ann += "{\"image\":\"" + image + "\",\"caption\":\"a scene number " +
           std::to_string(i) + " with some detail.\"}\n";
  }
  write_file(dir.sub("ann.jsonl"), ann);
  return dir.sub("ann.jsonl");
}

// one-sided binomial tail P(X >= k) for n fair-coin trials
double sign_test_p(int positives, int n) {
  double p = 0.0;
  for (int k = positives; k <= n; ++k) {
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    p += c;
  }
  return p / std::pow(2.0, n);
}

int oracle_rank(const Eigen::MatrixXd& scores, int query) {
  int rank = 1;
  double gt = scores(query, query);
  for (int j = 0; j < scores.cols(); ++j) {
    if (j == query) continue;
    if (scores(query, j) > gt || (scores(query, j) == gt && j < query)) ++rank;
  }
  return rank;
}

void check_shear_suite(Check& check) {
  ShearPolicy literal;
  check.require(*extract_first_clause("A cat sits on a mat. It also wears a", literal) ==
                    "A cat sits on a mat.",
                "first-clause literal case");
  check.require(*extract_first_clause("Hi. A long second sentence follows here.", literal) ==
                    "Hi. A long second sentence follows here.",
                "short-first-sentence literal case");
  check.require(!extract_first_clause("a bc.", literal), "minimum clause length is strict");

  std::vector<ShearPolicy> policies;
  for (int t : {1, 3, 5, 15, 30}) {
    for (int min_chars : {0, 5, 12}) {
      ShearPolicy p;
      p.max_tokens = t;
      p.min_clause_chars = min_chars;
      policies.push_back(p);
    }
  }
  SplitMix64 rng(42);
  for (int i = 0; i < 1000 && check.ok; ++i) {
    std::string input = random_string(rng);
    for (const auto& policy : policies) {
      auto result = shear_caption(input, policy);
      check.require(count_tokens(result.text) <= policy.max_tokens, "token bound");
      if (!result.text.empty() && !result.used_fallback &&
          policy.clause_terminators.find(result.text.back()) != std::string::npos)
        check.require(static_cast<int>(result.text.size()) > policy.min_clause_chars,
                      "clause validity");
      check.require(shear_caption(result.text, policy).text == result.text, "idempotence");

      std::vector<std::string> in_toks, out_toks;
      for (const auto& tok : tokenize(input)) in_toks.push_back(tok.text);
      for (const auto& tok : tokenize(result.text)) out_toks.push_back(tok.text);
      bool prefix = out_toks.size() <= in_toks.size();
      for (size_t k = 0; prefix && k < out_toks.size(); ++k)
        prefix = out_toks[k] == in_toks[k];
      check.require(prefix, "prefix property");
      if (!check.ok) break;
    }
  }
}

void check_gradient(Check& check) {
  SplitMix64 rng(17);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.next_below(7));
    int d = 2 + static_cast<int>(rng.next_below(15));
    auto img = normalize_rows(random_matrix(rng, n, d));
    auto txt = normalize_rows(random_matrix(rng, n, d));
    double tau = 0.07 + 0.43 * rng.next_double();
    auto analytic = contrastive_loss(img, txt, tau);
    for (int probe = 0; probe < 6; ++probe) {
      int i = static_cast<int>(rng.next_below(n));
      int j = static_cast<int>(rng.next_below(d));
      bool image_side = rng.next_below(2) == 0;
      Eigen::MatrixXd& target = image_side ? img : txt;
      double saved = target(i, j);
      target(i, j) = saved + h;
      double up = contrastive_loss(img, txt, tau).loss;
      target(i, j) = saved - h;
      double down = contrastive_loss(img, txt, tau).loss;
      target(i, j) = saved;
      double fd = (up - down) / (2 * h);
      double an = image_side ? analytic.d_img(i, j) : analytic.d_txt(i, j);
      worst = std::max(worst, std::abs(fd - an) /
                                  std::max(1e-6, std::abs(fd) + std::abs(an)));
    }
  }
  std::ostringstream msg;
  msg << "max relative error " << worst << " >= 1e-4";
  check.require(worst < 1e-4, msg.str());
}

void check_loss_oracles(Check& check) {
  Eigen::MatrixXd single_i(1, 4), single_t(1, 4);
  single_i << 1, 0, 0, 0;
  single_t << 0, 1, 0, 0;
  check.require(contrastive_loss(single_i, single_t, 0.07).loss == 0.0, "N=1 loss not exactly 0");

  Eigen::MatrixXd uni_i(4, 3), uni_t(4, 3);
  for (int i = 0; i < 4; ++i) {
    uni_i.row(i) << 1, 0, 0;
    uni_t.row(i) << 0, 1, 0;
  }
  check.require(std::abs(contrastive_loss(uni_i, uni_t, 0.07).loss - std::log(4.0)) < 1e-9,
                "uniform N=4 loss != ln 4");

  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  check.require(std::abs(contrastive_loss(eye, eye, 1.0).loss - expected) < 1e-9,
                "2x2 identity-similarity oracle");
}

void check_retrieval_oracle(Check& check) {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 50 && check.ok; ++trial) {
    int m = 2 + static_cast<int>(rng.next_below(30));
    auto scores = random_matrix(rng, m, m);
    if (trial % 3 == 0)
      for (int k = 0; k < m; ++k)
        scores(static_cast<int>(rng.next_below(m)), static_cast<int>(rng.next_below(m))) = 0.5;

    for (Direction dir : {Direction::I2T, Direction::T2I}) {
      Eigen::MatrixXd view = scores;
      if (dir == Direction::T2I) view.transposeInPlace();
      std::vector<int> ranks;
      for (int i = 0; i < m; ++i) ranks.push_back(oracle_rank(view, i));
      double r1 = 0, r5 = 0, r10 = 0;
      for (int r : ranks) {
        if (r <= 1) ++r1;
        if (r <= 5) ++r5;
        if (r <= 10) ++r10;
      }
      std::sort(ranks.begin(), ranks.end());
      double mdr = m % 2 ? ranks[m / 2] : 0.5 * (ranks[m / 2 - 1] + ranks[m / 2]);

      auto report = retrieval_from_scores(scores, dir);
      check.require(report.r1 == 100.0 * r1 / m && report.r5 == 100.0 * r5 / m &&
                        report.r10 == 100.0 * r10 / m && report.mdr == mdr,
                    "metrics differ from the full-sort oracle");
      check.require(report.r1 <= report.r5 && report.r5 <= report.r10,
                    "R@K monotonicity violated");
    }
  }
}

void check_multiview_benefit(Check& check) {
  auto run_one = [](uint64_t seed, int k) {
    SyntheticCorpusConfig cc;
    cc.seed = seed;
    TrainConfig tc;
    tc.seed = seed;
    auto corpus = make_synthetic_corpus(cc);
    ViewPolicy policy;
    policy.k_views = k;
    auto trained = train(corpus, tc, policy);
    return eval_retrieval(trained.params, eval_pairs_from_corpus(corpus), Direction::I2T).r1;
  };

  int mv4_wins = 0, mv1_wins = 0;
  double mean_raw = 0, mean_mv1 = 0, mean_mv4 = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    double raw = run_one(seed, 0), mv1 = run_one(seed, 1), mv4 = run_one(seed, 4);
    mean_raw += raw;
    mean_mv1 += mv1;
    mean_mv4 += mv4;
    if (mv4 > mv1) ++mv4_wins;
    if (mv1 > raw) ++mv1_wins;
  }
  mean_raw /= 10;
  mean_mv1 /= 10;
  mean_mv4 /= 10;

  std::ostringstream msg;
  msg << "mean R@1 raw " << mean_raw << " mv1 " << mean_mv1 << " mv4 " << mean_mv4
      << "; wins mv4>mv1 " << mv4_wins << "/10, mv1>raw " << mv1_wins << "/10";
  check.require(mean_mv4 > mean_mv1 && mean_mv1 > mean_raw, "mean ordering: " + msg.str());
  check.require(sign_test_p(mv4_wins, 10) < 0.05, "mv4>mv1 sign test: " + msg.str());
  check.require(sign_test_p(mv1_wins, 10) < 0.05, "mv1>raw sign test: " + msg.str());
}

void check_pipeline_determinism(Check& check) {
  TempDir dir;
  auto ann = write_fixture(dir, 12);
  auto pool = mock_pool();
  OrchestratorOptions options;
  options.image_root = dir.path.string();

  run_enhance(ann, dir.sub("run_a"), dir.sub("a.jsonl"), pool, options, 3, 2);
  run_enhance(ann, dir.sub("run_b"), dir.sub("b.jsonl"), pool, options, 3, 2);
  check.require(read_file(dir.sub("a.jsonl")) == read_file(dir.sub("b.jsonl")),
                "two identical runs differ");

  auto crashing = options;
  crashing.after_entry = [](size_t line) {
    if (line == 6) throw std::runtime_error("injected crash");
  };
  bool crashed = false;
  try {
    run_enhance(ann, dir.sub("run_c"), dir.sub("c.jsonl"), pool, crashing, 3, 1);
  } catch (const std::exception&) {
    crashed = true;
  }
  check.require(crashed, "crash injection did not fire");
  run_enhance(ann, dir.sub("run_c"), dir.sub("c.jsonl"), pool, options, 3, 1, true);
  check.require(read_file(dir.sub("c.jsonl")) == read_file(dir.sub("a.jsonl")),
                "resumed run differs from the uninterrupted run");
}

void check_dataset_shape(Check& check) {
  TempDir dir;
  auto ann = write_fixture(dir, 9);
  auto pool = mock_pool();
  OrchestratorOptions options;
  options.image_root = dir.path.string();

  auto [manifest, report] =
      run_enhance(ann, dir.sub("run"), dir.sub("out.jsonl"), pool, options, 2, 1);
  auto entries = read_enhanced(dir.sub("out.jsonl"));
  check.require(entries.size() == 9, "entry count");
  for (const auto& entry : entries) {
    check.require(!entry.caption.empty(), "raw caption present");
    check.require(entry.generated.size() == 4, "exactly K generated captions");
  }
  check.require(manifest.entry_count == entries.size(), "manifest count matches line count");
  check.require(manifest.pool_ids.size() == 4, "manifest pool size");

  // merging shards produced under different shear policies must fail
  auto plan = plan_shards(ann, 2);
  process_shard(plan, 0, ann, pool, options, dir.sub("mixed"));
  auto other = options;
  other.shear.max_tokens = 12;
  process_shard(plan, 1, ann, pool, other, dir.sub("mixed"));
  bool rejected = false;
  try {
    merge_shards(dir.sub("mixed"), plan, dir.sub("mixed.jsonl"));
  } catch (const std::exception&) {
    rejected = true;
  }
  check.require(rejected, "mixed shear-policy merge was not rejected");
}

void check_stats_invariance(Check& check) {
  TempDir dir;
  auto ann = write_fixture(dir, 40);
  auto pool = mock_pool();
  OrchestratorOptions options;
  options.image_root = dir.path.string();
  run_enhance(ann, dir.sub("run"), dir.sub("out.jsonl"), pool, options, 1, 1);
  auto entries = read_enhanced(dir.sub("out.jsonl"));

  auto count_all = [&](size_t parts) {
    WordCountAccumulator words;
    LengthAccumulator lengths;
    size_t chunk = (entries.size() + parts - 1) / parts;
    for (size_t p = 0; p < parts; ++p) {
      WordCountAccumulator wpart;
      LengthAccumulator lpart;
      size_t begin = p * chunk, end = std::min(entries.size(), begin + chunk);
      for (size_t i = begin; i < end; ++i) {
        wpart.add(kRawSource, entries[i].caption, default_stopwords(), {});
        for (const auto& gen : entries[i].generated)
          wpart.add(gen.model_id, gen.text, default_stopwords(), {});
        lpart.add(count_tokens(entries[i].caption), count_tokens(entries[i].caption));
      }
      words.merge(wpart);
      lengths.merge(lpart);
    }
    return std::make_pair(words.per_source, lengths.histogram);
  };
  auto single = count_all(1);
  check.require(count_all(2) == single && count_all(7) == single,
                "statistics differ across partitionings");

  HashedEmbeddingProvider provider(32, 9);
  auto dist = similarity_distribution(entries, provider, SimilarityPairing::RawOnly);
  double oracle = 0.0;
  for (const auto& entry : entries) {
    HashedEmbeddingProvider fresh(32, 9);
    auto img = fresh.embed({"image:" + entry.image_ref})[0];
    auto txt = fresh.embed({entry.caption})[0];
    double dot = 0, ni = 0, nt = 0;
    for (size_t i = 0; i < img.size(); ++i) {
      dot += img[i] * txt[i];
      ni += img[i] * img[i];
      nt += txt[i] * txt[i];
    }
    oracle += dot / (std::sqrt(ni) * std::sqrt(nt));
  }
  check.require(std::abs(dist.mean - oracle / entries.size()) < 1e-9,
                "similarity mean differs from the cosine oracle");
}

void check_style_bias(Check& check) {
  TempDir dir;
  auto ann = write_fixture(dir, 500);
  auto pool = mock_pool();
  OrchestratorOptions options;
  options.image_root = dir.path.string();
  // keep the raw generations: style vocabulary is a pre-shear property
  options.shear.max_tokens = 200;
  run_enhance(ann, dir.sub("run"), dir.sub("out.jsonl"), pool, options, 4, 2);
  auto entries = read_enhanced(dir.sub("out.jsonl"));
  check.require(entries.size() == 500, "run size");

  auto table = word_frequency(entries, 5);
  for (const char* model : {"minigpt4", "llava", "otter", "qwen-vl"}) {
    const auto& style = mock_style_words(model);
    auto it = table.per_source.find(model);
    check.require(it != table.per_source.end(), std::string("missing table for ") + model);
    if (it == table.per_source.end()) continue;
    for (const auto& [word, count] : it->second)
      check.require(std::find(style.begin(), style.end(), word) != style.end(),
                    "non-style word '" + word + "' in top-5 for " + model);
  }
}

}  // namespace

int main() {
  criterion("shear rule suite", 5.0, check_shear_suite);
  criterion("gradient check", 10.0, check_gradient);
  criterion("loss oracle values", 5.0, check_loss_oracles);
  criterion("retrieval-metric oracle", 5.0, check_retrieval_oracle);
  criterion("multi-view benefit", 300.0, check_multiview_benefit);
  criterion("pipeline determinism+resume", 30.0, check_pipeline_determinism);
  criterion("dataset shape", 30.0, check_dataset_shape);
  criterion("stats partition invariance", 30.0, check_stats_invariance);
  criterion("mock style-bias reproduction", 60.0, check_style_bias);

  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
