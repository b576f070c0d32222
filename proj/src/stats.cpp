#include "capforge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/hash.hpp"

namespace capforge {

using nlohmann::json;

void LengthAccumulator::add(int tokens, int pre_shear_tokens) {
  ++count;
  token_sum += tokens;
  pre_shear_token_sum += pre_shear_tokens;
  size_t bucket = static_cast<size_t>(std::max(tokens, 0)) / 5;
  if (bucket >= histogram.size()) bucket = histogram.size() - 1;
  ++histogram[bucket];
}

void LengthAccumulator::merge(const LengthAccumulator& other) {
  count += other.count;
  token_sum += other.token_sum;
  pre_shear_token_sum += other.pre_shear_token_sum;
  for (size_t i = 0; i < histogram.size(); ++i) histogram[i] += other.histogram[i];
}

const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",  "an",  "and", "are", "at",  "by", "for", "from", "in", "is",
      "it", "its", "of",  "on",  "that", "the", "this", "to", "with"};
  return words;
}

void WordCountAccumulator::add(const std::string& source, const std::string& text,
                               const std::set<std::string>& stopwords,
                               const TokenizerSpec& spec) {
  TokenizerSpec lowered = spec;
  lowered.lowercase = true;
  auto& counts = per_source[source];
  for (const auto& tok : tokenize(text, lowered)) {
    // skip pure punctuation tokens
    if (tok.text.size() == 1 && std::ispunct(static_cast<unsigned char>(tok.text[0]))) continue;
    if (stopwords.count(tok.text)) continue;
    ++counts[tok.text];
  }
}

void WordCountAccumulator::merge(const WordCountAccumulator& other) {
  for (const auto& [source, counts] : other.per_source) {
    auto& mine = per_source[source];
    for (const auto& [word, n] : counts) mine[word] += n;
  }
}

LengthStats length_stats(const std::vector<EnhancedEntry>& entries,
                         const TokenizerSpec& spec) {
  if (entries.empty()) throw EmptyCorpus();
  LengthStats stats;
  for (const auto& entry : entries) {
    int raw_tokens = count_tokens(entry.caption, spec);
    stats.per_source[kRawSource].add(raw_tokens, raw_tokens);
    for (const auto& gen : entry.generated) {
      stats.per_source[gen.model_id].add(count_tokens(gen.text, spec), gen.raw_token_count);
    }
  }
  return stats;
}

LengthStats length_stats_raw(const std::vector<AnnotationEntry>& entries,
                             const TokenizerSpec& spec) {
  if (entries.empty()) throw EmptyCorpus();
  LengthStats stats;
  for (const auto& entry : entries) {
    int tokens = count_tokens(entry.caption, spec);
    stats.per_source[kRawSource].add(tokens, tokens);
  }
  return stats;
}

WordFrequencyTable top_n_from_counts(const WordCountAccumulator& counts, size_t top_n) {
  WordFrequencyTable table;
  for (const auto& [source, words] : counts.per_source) {
    std::vector<std::pair<std::string, size_t>> rows(words.begin(), words.end());
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (rows.size() > top_n) rows.resize(top_n);
    table.per_source[source] = std::move(rows);
  }
  return table;
}

WordFrequencyTable word_frequency(const std::vector<EnhancedEntry>& entries, size_t top_n,
                                  const std::set<std::string>& stopwords,
                                  const TokenizerSpec& spec) {
  WordCountAccumulator acc;
  for (const auto& entry : entries) {
    acc.add(kRawSource, entry.caption, stopwords, spec);
    for (const auto& gen : entry.generated) acc.add(gen.model_id, gen.text, stopwords, spec);
  }
  return top_n_from_counts(acc, top_n);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionMismatch("vector dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<double>> HashedEmbeddingProvider::embed(
    const std::vector<std::string>& inputs) {
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (const auto& input : inputs) {
    SplitMix64 rng(mix64(fnv1a64(input) ^ seed_));
    std::vector<double> vec(dim_);
    double norm = 0.0;
    for (auto& v : vec) {
      v = rng.next_double() * 2.0 - 1.0;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0) for (auto& v : vec) v /= norm;
    out.push_back(std::move(vec));
  }
  return out;
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& inputs) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(0, timeout_ms_ * 1000);
  client.set_read_timeout(0, timeout_ms_ * 1000);
  json body = {{"inputs", inputs}};
  auto res = client.Post("/embed", body.dump(), "application/json");
  if (!res || res->status != 200)
    throw ProviderUnavailable("embedding service unreachable: " + base_url_);
  json obj = json::parse(res->body, nullptr, false);
  if (obj.is_discarded() || !obj.contains("vectors") || !obj["vectors"].is_array())
    throw ProviderUnavailable("embedding service returned malformed response");
  std::vector<std::vector<double>> out;
  for (const auto& vec : obj["vectors"]) {
    auto v = vec.get<std::vector<double>>();
    if (v.size() != dim_) throw DimensionMismatch("embedding dimension mismatch");
    out.push_back(std::move(v));
  }
  if (out.size() != inputs.size())
    throw ProviderUnavailable("embedding count mismatch");
  return out;
}

namespace {

// Image embeddings key on the image reference (a stand-in for image
// bytes; the hashed provider only needs a stable identity).
std::string image_key(const EnhancedEntry& entry) { return "image:" + entry.image_ref; }

struct PairList {
  std::vector<std::string> images;  // one key per pair
  std::vector<std::string> texts;
  std::vector<std::string> ids;
  std::vector<std::string> kinds;  // parallel to texts: which caption slot
};

PairList collect_pairs(const std::vector<EnhancedEntry>& entries, SimilarityPairing pairing) {
  PairList pairs;
  for (const auto& entry : entries) {
    pairs.images.push_back(image_key(entry));
    pairs.texts.push_back(entry.caption);
    pairs.ids.push_back(entry.image_id);
    pairs.kinds.push_back(kRawSource);
    if (pairing == SimilarityPairing::AllGenerated) {
      for (const auto& gen : entry.generated) {
        pairs.images.push_back(image_key(entry));
        pairs.texts.push_back(gen.text);
        pairs.ids.push_back(entry.image_id);
        pairs.kinds.push_back(gen.model_id);
      }
    }
  }
  return pairs;
}

}  // namespace

SimilarityDistribution similarity_distribution(const std::vector<EnhancedEntry>& entries,
                                               EmbeddingProvider& provider,
                                               SimilarityPairing pairing) {
  if (entries.empty()) throw EmptyCorpus();
  PairList pairs = collect_pairs(entries, pairing);
  auto image_vecs = provider.embed(pairs.images);
  auto text_vecs = provider.embed(pairs.texts);

  SimilarityDistribution dist;
  std::vector<double> sims;
  sims.reserve(pairs.images.size());
  double sum = 0.0;
  for (size_t i = 0; i < image_vecs.size(); ++i) {
    double s = cosine_similarity(image_vecs[i], text_vecs[i]);
    sims.push_back(s);
    sum += s;
    size_t bucket = static_cast<size_t>(std::floor((s + 1.0) / 0.02));
    if (bucket >= dist.histogram.size()) bucket = dist.histogram.size() - 1;
    ++dist.histogram[bucket];
  }
  dist.count = sims.size();
  dist.mean = sum / static_cast<double>(sims.size());
  std::sort(sims.begin(), sims.end());
  size_t mid = sims.size() / 2;
  dist.median = sims.size() % 2 ? sims[mid] : 0.5 * (sims[mid - 1] + sims[mid]);
  return dist;
}

void export_wordcloud_counts(const WordFrequencyTable& table, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [source, rows] : table.per_source) {
    std::string path = dir + "/wordfreq_" + source + ".csv";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path);
    out << "word,count\n";
    for (const auto& [word, count] : rows) out << word << ',' << count << '\n';
  }
}

WordFrequencyTable import_wordcloud_counts(const std::vector<std::string>& csv_paths) {
  WordFrequencyTable table;
  for (const auto& path : csv_paths) {
    std::string name = std::filesystem::path(path).stem().string();
    const std::string prefix = "wordfreq_";
    std::string source = name.rfind(prefix, 0) == 0 ? name.substr(prefix.size()) : name;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    auto& rows = table.per_source[source];
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      size_t comma = line.rfind(',');
      if (comma == std::string::npos) throw MalformedLine(0, "bad CSV row: " + line);
      rows.emplace_back(line.substr(0, comma), std::stoull(line.substr(comma + 1)));
    }
  }
  return table;
}

void export_embeddings(const std::vector<EnhancedEntry>& entries, EmbeddingProvider& provider,
                       SimilarityPairing pairing, const std::string& path) {
  PairList pairs = collect_pairs(entries, pairing);
  auto text_vecs = provider.embed(pairs.texts);

  // one image vector per unique entry
  std::vector<std::string> image_keys;
  std::vector<std::string> image_ids;
  for (const auto& entry : entries) {
    image_keys.push_back(image_key(entry));
    image_ids.push_back(entry.image_id);
  }
  auto image_vecs = provider.embed(image_keys);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  for (size_t i = 0; i < image_ids.size(); ++i) {
    json obj = {{"id", image_ids[i]}, {"kind", "image"}, {"vector", image_vecs[i]}};
    out << obj.dump() << '\n';
  }
  for (size_t i = 0; i < pairs.texts.size(); ++i) {
    json obj = {{"id", pairs.ids[i]}, {"kind", "text"}, {"source", pairs.kinds[i]},
                {"vector", text_vecs[i]}};
    out << obj.dump() << '\n';
  }
}

std::string stats_to_json(const LengthStats& lengths, const WordFrequencyTable& words,
                          const std::optional<SimilarityDistribution>& similarity) {
  json obj;
  for (const auto& [source, acc] : lengths.per_source) {
    obj["lengths"][source] = {{"count", acc.count},
                              {"mean_tokens", acc.mean()},
                              {"mean_pre_shear_tokens", acc.pre_shear_mean()},
                              {"histogram", acc.histogram}};
  }
  for (const auto& [source, rows] : words.per_source) {
    json list = json::array();
    for (const auto& [word, count] : rows) list.push_back({{"word", word}, {"count", count}});
    obj["word_frequency"][source] = std::move(list);
  }
  if (similarity) {
    obj["similarity"] = {{"count", similarity->count},
                         {"mean", similarity->mean},
                         {"median", similarity->median},
                         {"histogram", similarity->histogram}};
  }
  return obj.dump(2);
}

}  // namespace capforge
