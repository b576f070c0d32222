#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/shear.hpp"

namespace capforge {

// Source label for the raw captions; generated captions are labelled by
// their model_id.
inline constexpr const char* kRawSource = "raw";

// Token-length histogram: bucket width 5, range [0, 200); counts at or
// past the range clamp into the last bucket so mass always equals count.
struct LengthAccumulator {
  size_t count = 0;
  double token_sum = 0.0;
  double pre_shear_token_sum = 0.0;  // raw_token_count; equals token_sum for raw captions
  std::vector<size_t> histogram = std::vector<size_t>(40, 0);

  void add(int tokens, int pre_shear_tokens);
  void merge(const LengthAccumulator& other);
  double mean() const { return count ? token_sum / static_cast<double>(count) : 0.0; }
  double pre_shear_mean() const {
    return count ? pre_shear_token_sum / static_cast<double>(count) : 0.0;
  }
};

struct LengthStats {
  std::map<std::string, LengthAccumulator> per_source;
};

struct WordFrequencyTable {
  // per-source, descending by count, ties lexicographic
  std::map<std::string, std::vector<std::pair<std::string, size_t>>> per_source;
};

struct SimilarityDistribution {
  size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  // bucket width 0.02 over [-1, 1]
  std::vector<size_t> histogram = std::vector<size_t>(100, 0);
};

enum class SimilarityPairing { RawOnly, AllGenerated };

// Pluggable embedder behind the similarity analyses. The hashed variant
// is a deterministic test double; the HTTP variant posts
// {"inputs":[...]} and expects {"vectors":[[...],...]}.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual size_t dimension() const = 0;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) = 0;
};

class HashedEmbeddingProvider : public EmbeddingProvider {
 public:
  HashedEmbeddingProvider(size_t dimension, uint64_t seed) : dim_(dimension), seed_(seed) {}
  size_t dimension() const override { return dim_; }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) override;

 private:
  size_t dim_;
  uint64_t seed_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, size_t dimension, int timeout_ms = 30000)
      : base_url_(std::move(base_url)), dim_(dimension), timeout_ms_(timeout_ms) {}
  size_t dimension() const override { return dim_; }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) override;

 private:
  std::string base_url_;
  size_t dim_;
  int timeout_ms_;
};

const std::set<std::string>& default_stopwords();

// Streaming accumulators; merge() is associative so any partitioning of
// the corpus gives the same result as a single pass.
struct WordCountAccumulator {
  std::map<std::string, std::map<std::string, size_t>> per_source;

  void add(const std::string& source, const std::string& text,
           const std::set<std::string>& stopwords, const TokenizerSpec& spec);
  void merge(const WordCountAccumulator& other);
};

LengthStats length_stats(const std::vector<EnhancedEntry>& entries,
                         const TokenizerSpec& spec = {});

// Raw-only corpora: annotation entries without generated captions.
LengthStats length_stats_raw(const std::vector<AnnotationEntry>& entries,
                             const TokenizerSpec& spec = {});

WordFrequencyTable word_frequency(const std::vector<EnhancedEntry>& entries, size_t top_n,
                                  const std::set<std::string>& stopwords = default_stopwords(),
                                  const TokenizerSpec& spec = {});

WordFrequencyTable top_n_from_counts(const WordCountAccumulator& counts, size_t top_n);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

SimilarityDistribution similarity_distribution(const std::vector<EnhancedEntry>& entries,
                                               EmbeddingProvider& provider,
                                               SimilarityPairing pairing);

void export_wordcloud_counts(const WordFrequencyTable& table, const std::string& dir);
WordFrequencyTable import_wordcloud_counts(const std::vector<std::string>& csv_paths);

// Line-delimited {"id","kind":"image"|"text","vector":[...]} export for
// downstream projection tools.
void export_embeddings(const std::vector<EnhancedEntry>& entries, EmbeddingProvider& provider,
                       SimilarityPairing pairing, const std::string& path);

std::string stats_to_json(const LengthStats& lengths, const WordFrequencyTable& words,
                          const std::optional<SimilarityDistribution>& similarity);

}  // namespace capforge
