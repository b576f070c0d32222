#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/gateway.hpp"
#include "capforge/shear.hpp"

namespace capforge {

// Half-open [start, end) line ranges covering the input exactly once.
struct ShardPlan {
  size_t total_lines = 0;
  std::vector<std::pair<size_t, size_t>> boundaries;

  size_t shard_count() const { return boundaries.size(); }
};

struct ShardFailure {
  size_t line = 0;
  std::string model_id;  // empty for image-load failures
  std::string error_kind;
};

struct ShardCheckpoint {
  size_t shard_index = 0;
  // one before the shard start means "nothing done yet"
  long long last_completed_line = -1;
  size_t lines_emitted = 0;  // committed output lines, for resume truncation
  std::vector<ShardFailure> failures;
  // per-shard counters folded into the merged run report
  size_t images_seen = 0;
  size_t images_dropped = 0;
  size_t captions_generated = 0;
  size_t captions_sheared_by_fallback = 0;
};

struct RunReport {
  size_t images_total = 0;
  size_t images_enhanced = 0;
  size_t images_dropped = 0;
  size_t captions_generated = 0;
  size_t captions_sheared_by_fallback = 0;
  std::map<std::string, size_t> per_model_failures;
  std::vector<size_t> dropped_lines;
  double wall_time_s = 0.0;
};

enum class DropPolicy { Drop, Keep };

struct OrchestratorOptions {
  ShearPolicy shear;
  TokenizerSpec tokenizer;
  DropPolicy drop_policy = DropPolicy::Drop;
  // directory images are resolved against when image_ref is relative
  std::string image_root;
  // test hook, called after each entry is committed; throwing simulates a crash
  std::function<void(size_t line)> after_entry;
};

ShardPlan plan_shards(const std::string& annotation_path, size_t shard_count);
ShardPlan plan_shards_for_lines(size_t total_lines, size_t shard_count);

std::string shard_output_path(const std::string& run_dir, size_t shard_index);
std::string shard_checkpoint_path(const std::string& run_dir, size_t shard_index);

std::optional<ShardCheckpoint> read_checkpoint(const std::string& path);

// Captions every line of one shard against the pool, shears each raw
// caption, and appends EnhancedEntry lines to the shard output. The
// checkpoint is rewritten atomically (temp + rename) after every entry,
// so a killed run resumes after the last committed line.
ShardCheckpoint process_shard(const ShardPlan& plan, size_t shard_index,
                              const std::string& annotation_path,
                              const std::vector<std::shared_ptr<CaptionerClient>>& pool,
                              const OrchestratorOptions& options, const std::string& run_dir,
                              const std::optional<ShardCheckpoint>& resume_from = std::nullopt);

// Concatenates shard outputs in shard order into the final dataset.
// All shard manifests must agree on pool ids and shear-policy digest.
std::pair<DatasetManifest, RunReport> merge_shards(const std::string& run_dir,
                                                   const ShardPlan& plan,
                                                   const std::string& output_path);

void write_report(const RunReport& report, const std::string& path);

// plan + process every shard (optionally resuming) + merge.
std::pair<DatasetManifest, RunReport> run_enhance(
    const std::string& annotation_path, const std::string& run_dir,
    const std::string& output_path,
    const std::vector<std::shared_ptr<CaptionerClient>>& pool,
    const OrchestratorOptions& options, size_t shard_count, size_t workers,
    bool resume = false);

}  // namespace capforge
