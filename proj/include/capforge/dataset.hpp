#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace capforge {

// One image with its raw caption, as read from an annotation file.
struct AnnotationEntry {
  std::string image_id;
  std::string image_ref;   // path or URI; bytes never travel in dataset files
  std::string caption;     // raw caption, preserved byte-exact downstream
  size_t line_no = 0;      // 1-based line in the source file, for error reporting
};

struct GeneratedCaption {
  std::string text;
  std::string model_id;
  bool sheared = false;
  int raw_token_count = 0;  // pre-shear count under the pipeline tokenizer
};

// An annotation entry plus the K generated captions, in pool order.
struct EnhancedEntry {
  std::string image_id;
  std::string image_ref;
  std::string caption;
  std::vector<GeneratedCaption> generated;
};

struct DatasetManifest {
  size_t entry_count = 0;
  std::vector<std::string> pool_ids;
  std::string shear_policy_digest;  // hex
  std::string created_at;           // ISO-8601 UTC
};

// Streaming line-oriented reader. Records are one JSON object per line:
//   {"image": <string>, "caption": <string>, "id": <optional string>}
// When "id" is absent the image path doubles as the id.
class AnnotationReader {
 public:
  explicit AnnotationReader(const std::string& path);

  // Next entry in file order, or nullopt at end of file.
  // Throws MalformedLine / MissingField with the offending line number.
  std::optional<AnnotationEntry> next();

  size_t line_no() const { return line_no_; }

 private:
  std::ifstream in_;
  size_t line_no_ = 0;
};

std::vector<AnnotationEntry> read_annotations(const std::string& path);

AnnotationEntry parse_annotation_line(const std::string& line, size_t line_no);
EnhancedEntry parse_enhanced_line(const std::string& line, size_t line_no);
std::string enhanced_to_line(const EnhancedEntry& entry);

std::vector<EnhancedEntry> read_enhanced(const std::string& path);

// Writes one record per line plus a `<path>.manifest.json` sidecar.
// Every entry must match pool_ids in order and size (InconsistentPool).
DatasetManifest write_enhanced(const std::vector<EnhancedEntry>& entries,
                               const std::string& path,
                               const std::vector<std::string>& pool_ids,
                               uint64_t shear_policy_digest);

std::string manifest_path_for(const std::string& data_path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace capforge
