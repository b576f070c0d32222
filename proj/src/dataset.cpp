#include "capforge/dataset.hpp"

#include <chrono>
#include <ctime>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/hash.hpp"

namespace capforge {

using nlohmann::json;

namespace {

std::string now_iso8601_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool all_whitespace(const std::string& s) {
  for (unsigned char c : s)
    if (!std::isspace(c)) return false;
  return true;
}

std::string require_string(const json& obj, const char* field, size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw MissingField(line_no, field);
  if (!it->is_string()) throw MalformedLine(line_no, std::string("field '") + field + "' is not a string");
  return it->get<std::string>();
}

}  // namespace

AnnotationEntry parse_annotation_line(const std::string& line, size_t line_no) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object())
    throw MalformedLine(line_no, "not a JSON object");
  AnnotationEntry entry;
  entry.image_ref = require_string(obj, "image", line_no);
  entry.caption = require_string(obj, "caption", line_no);
  if (all_whitespace(entry.caption)) throw MalformedLine(line_no, "caption is empty");
  if (obj.contains("id") && obj["id"].is_string())
    entry.image_id = obj["id"].get<std::string>();
  else
    entry.image_id = entry.image_ref;
  if (entry.image_id.empty()) throw MalformedLine(line_no, "empty image id");
  entry.line_no = line_no;
  return entry;
}

AnnotationReader::AnnotationReader(const std::string& path) : in_(path) {
  if (!in_) throw IoError("cannot open annotation file: " + path);
}

std::optional<AnnotationEntry> AnnotationReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.empty() || all_whitespace(line)) continue;
    return parse_annotation_line(line, line_no_);
  }
  return std::nullopt;
}

std::vector<AnnotationEntry> read_annotations(const std::string& path) {
  AnnotationReader reader(path);
  std::vector<AnnotationEntry> out;
  while (auto entry = reader.next()) out.push_back(std::move(*entry));
  return out;
}

EnhancedEntry parse_enhanced_line(const std::string& line, size_t line_no) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object())
    throw MalformedLine(line_no, "not a JSON object");
  EnhancedEntry entry;
  entry.image_id = require_string(obj, "id", line_no);
  entry.image_ref = require_string(obj, "image", line_no);
  entry.caption = require_string(obj, "caption", line_no);
  auto it = obj.find("generated");
  if (it == obj.end()) throw MissingField(line_no, "generated");
  if (!it->is_array()) throw MalformedLine(line_no, "'generated' is not an array");
  for (const auto& g : *it) {
    if (!g.is_object()) throw MalformedLine(line_no, "generated item is not an object");
    GeneratedCaption cap;
    cap.text = require_string(g, "text", line_no);
    cap.model_id = require_string(g, "model_id", line_no);
    cap.sheared = g.value("sheared", false);
    cap.raw_token_count = g.value("raw_token_count", 0);
    entry.generated.push_back(std::move(cap));
  }
  return entry;
}

std::string enhanced_to_line(const EnhancedEntry& entry) {
  json gen = json::array();
  for (const auto& g : entry.generated) {
    gen.push_back({{"text", g.text},
                   {"model_id", g.model_id},
                   {"sheared", g.sheared},
                   {"raw_token_count", g.raw_token_count}});
  }
  json obj = {{"id", entry.image_id},
              {"image", entry.image_ref},
              {"caption", entry.caption},
              {"generated", std::move(gen)}};
  return obj.dump();
}

std::vector<EnhancedEntry> read_enhanced(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::vector<EnhancedEntry> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || all_whitespace(line)) continue;
    out.push_back(parse_enhanced_line(line, line_no));
  }
  return out;
}

std::string manifest_path_for(const std::string& data_path) {
  return data_path + ".manifest.json";
}

DatasetManifest write_enhanced(const std::vector<EnhancedEntry>& entries,
                               const std::string& path,
                               const std::vector<std::string>& pool_ids,
                               uint64_t shear_policy_digest) {
  for (const auto& entry : entries) {
    if (entry.generated.size() != pool_ids.size()) throw InconsistentPool(entry.image_id);
    for (size_t k = 0; k < pool_ids.size(); ++k)
      if (entry.generated[k].model_id != pool_ids[k]) throw InconsistentPool(entry.image_id);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open output file: " + path);
  for (const auto& entry : entries) out << enhanced_to_line(entry) << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path);

  DatasetManifest manifest;
  manifest.entry_count = entries.size();
  manifest.pool_ids = pool_ids;
  manifest.shear_policy_digest = hex64(shear_policy_digest);
  manifest.created_at = now_iso8601_utc();
  write_manifest(manifest, manifest_path_for(path));
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  json obj = {{"entry_count", manifest.entry_count},
              {"pool_ids", manifest.pool_ids},
              {"shear_policy_digest", manifest.shear_policy_digest},
              {"created_at", manifest.created_at}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest file: " + path);
  out << obj.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest file: " + path);
  json obj = json::parse(in, nullptr, false);
  if (obj.is_discarded()) throw MalformedLine(0, "manifest is not valid JSON");
  DatasetManifest manifest;
  manifest.entry_count = obj.value("entry_count", size_t{0});
  manifest.pool_ids = obj.value("pool_ids", std::vector<std::string>{});
  manifest.shear_policy_digest = obj.value("shear_policy_digest", "");
  manifest.created_at = obj.value("created_at", "");
  return manifest;
}

}  // namespace capforge
