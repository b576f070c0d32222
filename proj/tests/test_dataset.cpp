#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/errors.hpp"
#include "capforge/hash.hpp"

using namespace capforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("capforge_test_" + hex64(SplitMix64(::getpid() + clock()).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
}

EnhancedEntry random_entry(SplitMix64& rng, const std::vector<std::string>& pool_ids) {
  static const char* words[] = {"cat", "dog", "sky", "tree", "road", "\"quoted\"",
                                "uni\xc3\xa9", "tab\tchar"};
  auto word = [&] { return std::string(words[rng.next_below(8)]); };
  EnhancedEntry entry;
  entry.image_id = "img_" + hex64(rng.next());
  entry.image_ref = "images/" + entry.image_id + ".jpg";
  entry.caption = word() + " " + word() + " " + word() + ".";
  for (const auto& id : pool_ids) {
    GeneratedCaption cap;
    cap.text = word() + " " + word() + ".";
    cap.model_id = id;
    cap.sheared = rng.next_below(2) == 0;
    cap.raw_token_count = static_cast<int>(rng.next_below(100));
    entry.generated.push_back(cap);
  }
  return entry;
}

bool entries_equal(const EnhancedEntry& a, const EnhancedEntry& b) {
  if (a.image_id != b.image_id || a.image_ref != b.image_ref || a.caption != b.caption)
    return false;
  if (a.generated.size() != b.generated.size()) return false;
  for (size_t i = 0; i < a.generated.size(); ++i) {
    const auto &x = a.generated[i], &y = b.generated[i];
    if (x.text != y.text || x.model_id != y.model_id || x.sheared != y.sheared ||
        x.raw_token_count != y.raw_token_count)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("read_annotations passes valid lines through in order") {
  TempDir dir;
  write_file(dir.file("a.jsonl"),
             "{\"image\":\"a.jpg\",\"caption\":\"a cat.\"}\n"
             "{\"image\":\"b.jpg\",\"caption\":\"a dog.\",\"id\":\"b42\"}\n"
             "{\"image\":\"c.jpg\",\"caption\":\"a bird.\"}\n");
  auto entries = read_annotations(dir.file("a.jsonl"));
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].image_id == "a.jpg");  // id defaults to image path
  CHECK(entries[0].caption == "a cat.");
  CHECK(entries[1].image_id == "b42");
  CHECK(entries[2].line_no == 3);
}

TEST_CASE("read_annotations reports missing fields with line numbers") {
  TempDir dir;
  write_file(dir.file("a.jsonl"), "{\"image\":\"a.jpg\"}\n");
  try {
    read_annotations(dir.file("a.jsonl"));
    FAIL("expected MissingField");
  } catch (const MissingField& e) {
    CHECK(e.line_no == 1);
    CHECK(e.field == "caption");
  }

  write_file(dir.file("b.jsonl"),
             "{\"image\":\"a.jpg\",\"caption\":\"ok.\"}\nnot json\n");
  try {
    read_annotations(dir.file("b.jsonl"));
    FAIL("expected MalformedLine");
  } catch (const MalformedLine& e) {
    CHECK(e.line_no == 2);
  }
}

TEST_CASE("empty file yields empty stream without error") {
  TempDir dir;
  write_file(dir.file("empty.jsonl"), "");
  CHECK(read_annotations(dir.file("empty.jsonl")).empty());
}

TEST_CASE("whitespace-only caption is rejected") {
  TempDir dir;
  write_file(dir.file("a.jsonl"), "{\"image\":\"a.jpg\",\"caption\":\"  \"}\n");
  CHECK_THROWS_AS(read_annotations(dir.file("a.jsonl")), MalformedLine);
}

TEST_CASE("write_enhanced counts and sidecar manifest") {
  TempDir dir;
  std::vector<std::string> pool = {"m1", "m2", "m3", "m4"};

  SUBCASE("zero entries") {
    auto manifest = write_enhanced({}, dir.file("out.jsonl"), pool, 1);
    CHECK(manifest.entry_count == 0);
    auto reread = read_manifest(manifest_path_for(dir.file("out.jsonl")));
    CHECK(reread.entry_count == 0);
    CHECK(reread.pool_ids == pool);
  }

  SUBCASE("two entries, K=4") {
    SplitMix64 rng(1);
    std::vector<EnhancedEntry> entries = {random_entry(rng, pool), random_entry(rng, pool)};
    auto manifest = write_enhanced(entries, dir.file("out.jsonl"), pool, 99);
    CHECK(manifest.entry_count == 2);
    CHECK(manifest.pool_ids.size() == 4);
    std::ifstream in(dir.file("out.jsonl"));
    std::string line;
    size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 2);
  }

  SUBCASE("pool mismatch is rejected") {
    SplitMix64 rng(2);
    auto entry = random_entry(rng, {"m1", "m2", "m3"});
    CHECK_THROWS_AS(write_enhanced({entry}, dir.file("out.jsonl"), pool, 1),
                    InconsistentPool);
    auto wrong_order = random_entry(rng, {"m1", "m2", "m4", "m3"});
    CHECK_THROWS_AS(write_enhanced({wrong_order}, dir.file("out.jsonl"), pool, 1),
                    InconsistentPool);
  }
}

TEST_CASE("round-trip preserves entries byte-exact") {
  TempDir dir;
  std::vector<std::string> pool = {"alpha", "beta"};
  SplitMix64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EnhancedEntry> entries;
    size_t n = rng.next_below(8);
    for (size_t i = 0; i < n; ++i) entries.push_back(random_entry(rng, pool));
    write_enhanced(entries, dir.file("rt.jsonl"), pool, 5);
    auto reread = read_enhanced(dir.file("rt.jsonl"));
    REQUIRE(reread.size() == entries.size());
    for (size_t i = 0; i < entries.size(); ++i) CHECK(entries_equal(entries[i], reread[i]));

    // a second write of the reread entries is byte-identical
    write_enhanced(reread, dir.file("rt2.jsonl"), pool, 5);
    std::ifstream f1(dir.file("rt.jsonl")), f2(dir.file("rt2.jsonl"));
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
  }
}

TEST_CASE("raw caption preserved byte-exact through parse/serialize") {
  std::string caption = "caf\xc3\xa9 \"on\" the \\ corner\t~ \xe2\x9c\x93.";
  EnhancedEntry entry;
  entry.image_id = "x";
  entry.image_ref = "x.jpg";
  entry.caption = caption;
  auto reparsed = parse_enhanced_line(enhanced_to_line(entry), 1);
  CHECK(reparsed.caption == caption);
}
