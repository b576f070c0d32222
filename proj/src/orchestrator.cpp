#include "capforge/orchestrator.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/hash.hpp"

namespace capforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);
  size_t lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  return lines;
}

void atomic_write(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp);
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

void write_checkpoint(const ShardCheckpoint& ckpt, const std::string& path) {
  json failures = json::array();
  for (const auto& f : ckpt.failures)
    failures.push_back({{"line", f.line}, {"model_id", f.model_id}, {"error_kind", f.error_kind}});
  json obj = {{"shard_index", ckpt.shard_index},
              {"last_completed_line", ckpt.last_completed_line},
              {"lines_emitted", ckpt.lines_emitted},
              {"failures", std::move(failures)},
              {"images_seen", ckpt.images_seen},
              {"images_dropped", ckpt.images_dropped},
              {"captions_generated", ckpt.captions_generated},
              {"captions_sheared_by_fallback", ckpt.captions_sheared_by_fallback}};
  atomic_write(path, obj.dump(2) + "\n");
}

std::string read_image_bytes(const std::string& image_ref, const std::string& image_root) {
  fs::path p(image_ref);
  if (p.is_relative() && !image_root.empty()) p = fs::path(image_root) / p;
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Keep the first n lines of a file, dropping any partial tail from an
// interrupted append.
void truncate_to_lines(const std::string& path, size_t n) {
  std::ifstream in(path);
  std::string kept;
  if (in) {
    std::string line;
    size_t i = 0;
    while (i < n && std::getline(in, line)) {
      kept += line;
      kept += '\n';
      ++i;
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << kept;
}

}  // namespace

ShardPlan plan_shards_for_lines(size_t total_lines, size_t shard_count) {
  if (shard_count < 1) throw ConfigError("shard_count must be >= 1");
  if (total_lines == 0) throw EmptyInput();
  ShardPlan plan;
  plan.total_lines = total_lines;
  size_t base = total_lines / shard_count;
  size_t rem = total_lines % shard_count;
  size_t cursor = 0;
  for (size_t i = 0; i < shard_count; ++i) {
    size_t size = base + (i < rem ? 1 : 0);
    plan.boundaries.emplace_back(cursor, cursor + size);
    cursor += size;
  }
  return plan;
}

ShardPlan plan_shards(const std::string& annotation_path, size_t shard_count) {
  return plan_shards_for_lines(count_lines(annotation_path), shard_count);
}

std::string shard_output_path(const std::string& run_dir, size_t shard_index) {
  return run_dir + "/shard_" + std::to_string(shard_index) + ".jsonl";
}

std::string shard_checkpoint_path(const std::string& run_dir, size_t shard_index) {
  return run_dir + "/shard_" + std::to_string(shard_index) + ".ckpt.json";
}

std::optional<ShardCheckpoint> read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) return std::nullopt;
  ShardCheckpoint ckpt;
  ckpt.shard_index = obj.value("shard_index", size_t{0});
  ckpt.last_completed_line = obj.value("last_completed_line", -1LL);
  ckpt.lines_emitted = obj.value("lines_emitted", size_t{0});
  ckpt.images_seen = obj.value("images_seen", size_t{0});
  ckpt.images_dropped = obj.value("images_dropped", size_t{0});
  ckpt.captions_generated = obj.value("captions_generated", size_t{0});
  ckpt.captions_sheared_by_fallback = obj.value("captions_sheared_by_fallback", size_t{0});
  for (const auto& f : obj.value("failures", json::array())) {
    ckpt.failures.push_back({f.value("line", size_t{0}), f.value("model_id", ""),
                             f.value("error_kind", "")});
  }
  return ckpt;
}

ShardCheckpoint process_shard(const ShardPlan& plan, size_t shard_index,
                              const std::string& annotation_path,
                              const std::vector<std::shared_ptr<CaptionerClient>>& pool,
                              const OrchestratorOptions& options, const std::string& run_dir,
                              const std::optional<ShardCheckpoint>& resume_from) {
  if (shard_index >= plan.shard_count()) throw ConfigError("shard index out of range");
  if (pool.empty()) throw ConfigError("pool must not be empty");
  auto [start, end] = plan.boundaries[shard_index];

  fs::create_directories(run_dir);
  std::string out_path = shard_output_path(run_dir, shard_index);
  std::string ckpt_path = shard_checkpoint_path(run_dir, shard_index);

  ShardCheckpoint ckpt;
  ckpt.shard_index = shard_index;
  ckpt.last_completed_line = static_cast<long long>(start) - 1;
  if (resume_from) {
    if (resume_from->shard_index != shard_index)
      throw ConfigError("checkpoint does not match this shard");
    ckpt = *resume_from;
  }
  truncate_to_lines(out_path, ckpt.lines_emitted);

  std::vector<std::string> pool_ids;
  for (const auto& client : pool) pool_ids.push_back(client->endpoint().model_id);
  uint64_t digest = shear_policy_digest(options.shear, options.tokenizer);

  std::ifstream in(annotation_path);
  if (!in) throw IoError("cannot open annotation file: " + annotation_path);
  std::ofstream out(out_path, std::ios::app);
  if (!out) throw IoError("cannot open shard output: " + out_path);

  std::string line;
  size_t line_index = 0;  // 0-based
  while (line_index < end && std::getline(in, line)) {
    size_t current = line_index++;
    if (current < start) continue;
    if (static_cast<long long>(current) <= ckpt.last_completed_line) continue;

    bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (!blank) {
      AnnotationEntry annotation = parse_annotation_line(line, current + 1);
      ++ckpt.images_seen;

      std::string image_bytes = read_image_bytes(annotation.image_ref, options.image_root);
      bool drop = false;
      EnhancedEntry entry;
      entry.image_id = annotation.image_id;
      entry.image_ref = annotation.image_ref;
      entry.caption = annotation.caption;

      if (image_bytes.empty()) {
        ckpt.failures.push_back({current, "", "image_unreadable"});
        drop = options.drop_policy == DropPolicy::Drop;
        if (!drop) {
          for (const auto& id : pool_ids) entry.generated.push_back({"", id, false, 0});
        }
      } else {
        auto outcomes = caption_multiview(pool, image_bytes, "image/jpeg");
        for (size_t k = 0; k < outcomes.size(); ++k) {
          if (outcomes[k].ok()) {
            ShearResult sheared =
                shear_caption(*outcomes[k].text, options.shear, options.tokenizer);
            entry.generated.push_back(
                {sheared.text, pool_ids[k], sheared.sheared, sheared.raw_token_count});
            ++ckpt.captions_generated;
            if (sheared.used_fallback) ++ckpt.captions_sheared_by_fallback;
          } else {
            ckpt.failures.push_back(
                {current, pool_ids[k], to_string(outcomes[k].error->kind)});
            if (options.drop_policy == DropPolicy::Drop) drop = true;
            entry.generated.push_back({"", pool_ids[k], false, 0});
          }
        }
      }

      if (drop) {
        ++ckpt.images_dropped;
      } else {
        out << enhanced_to_line(entry) << '\n';
        out.flush();
        if (!out) throw IoError("write failed: " + out_path);
        ++ckpt.lines_emitted;
      }
    }

    ckpt.last_completed_line = static_cast<long long>(current);
    write_checkpoint(ckpt, ckpt_path);
    if (options.after_entry) options.after_entry(current);
  }

  // shard manifest, so merges can reject mixed policies/pools
  DatasetManifest manifest;
  manifest.entry_count = ckpt.lines_emitted;
  manifest.pool_ids = pool_ids;
  manifest.shear_policy_digest = hex64(digest);
  write_manifest(manifest, manifest_path_for(out_path));
  return ckpt;
}

std::pair<DatasetManifest, RunReport> merge_shards(const std::string& run_dir,
                                                   const ShardPlan& plan,
                                                   const std::string& output_path) {
  RunReport report;
  std::vector<std::string> pool_ids;
  std::string digest;

  for (size_t i = 0; i < plan.shard_count(); ++i) {
    std::string out_path = shard_output_path(run_dir, i);
    std::string man_path = manifest_path_for(out_path);
    if (!fs::exists(out_path) || !fs::exists(man_path)) throw MissingShard(i);
    DatasetManifest manifest = read_manifest(man_path);
    if (i == 0) {
      pool_ids = manifest.pool_ids;
      digest = manifest.shear_policy_digest;
    } else {
      if (manifest.pool_ids != pool_ids)
        throw InconsistentPool("shard " + std::to_string(i));
      if (manifest.shear_policy_digest != digest)
        throw Error("shard " + std::to_string(i) + " was produced under a different shear policy");
    }
  }

  std::ofstream out(output_path, std::ios::trunc);
  if (!out) throw IoError("cannot open output: " + output_path);
  size_t entries = 0;
  for (size_t i = 0; i < plan.shard_count(); ++i) {
    std::ifstream in(shard_output_path(run_dir, i));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      out << line << '\n';
      ++entries;
    }
    if (auto ckpt = read_checkpoint(shard_checkpoint_path(run_dir, i))) {
      report.images_total += ckpt->images_seen;
      report.images_dropped += ckpt->images_dropped;
      report.captions_generated += ckpt->captions_generated;
      report.captions_sheared_by_fallback += ckpt->captions_sheared_by_fallback;
      for (const auto& f : ckpt->failures) {
        if (f.model_id.empty())
          report.dropped_lines.push_back(f.line);
        else
          ++report.per_model_failures[f.model_id];
      }
    }
  }
  out.flush();
  if (!out) throw IoError("write failed: " + output_path);
  report.images_enhanced = entries;

  DatasetManifest manifest;
  manifest.entry_count = entries;
  manifest.pool_ids = pool_ids;
  manifest.shear_policy_digest = digest;
  write_manifest(manifest, manifest_path_for(output_path));
  return {manifest, report};
}

void write_report(const RunReport& report, const std::string& path) {
  json per_model = json::object();
  for (const auto& [model, n] : report.per_model_failures) per_model[model] = n;
  json obj = {{"images_total", report.images_total},
              {"images_enhanced", report.images_enhanced},
              {"images_dropped", report.images_dropped},
              {"captions_generated", report.captions_generated},
              {"captions_sheared_by_fallback", report.captions_sheared_by_fallback},
              {"per_model_failures", std::move(per_model)},
              {"dropped_lines", report.dropped_lines},
              {"wall_time_s", report.wall_time_s}};
  atomic_write(path, obj.dump(2) + "\n");
}

std::pair<DatasetManifest, RunReport> run_enhance(
    const std::string& annotation_path, const std::string& run_dir,
    const std::string& output_path,
    const std::vector<std::shared_ptr<CaptionerClient>>& pool,
    const OrchestratorOptions& options, size_t shard_count, size_t workers,
    bool resume) {
  auto started = std::chrono::steady_clock::now();
  ShardPlan plan = plan_shards(annotation_path, shard_count);
  fs::create_directories(run_dir);

  std::atomic<size_t> next_shard{0};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto worker = [&] {
    for (;;) {
      size_t i = next_shard.fetch_add(1);
      if (i >= plan.shard_count()) return;
      try {
        std::optional<ShardCheckpoint> ckpt;
        if (resume) ckpt = read_checkpoint(shard_checkpoint_path(run_dir, i));
        process_shard(plan, i, annotation_path, pool, options, run_dir, ckpt);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  size_t n_workers = std::max<size_t>(1, std::min(workers, plan.shard_count()));
  std::vector<std::thread> threads;
  for (size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  auto [manifest, report] = merge_shards(run_dir, plan, output_path);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_report(report, run_dir + "/report.json");
  return {manifest, report};
}

}  // namespace capforge
