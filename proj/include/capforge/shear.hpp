#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capforge {

// Whitespace-plus-punctuation tokenizer. Punctuation marks count as
// separate tokens; an apostrophe between letters stays inside its word
// ("man's" is one token). Model-agnostic on purpose: the limit T needs
// a neutral count that does not depend on any model's BPE vocabulary.
struct TokenizerSpec {
  bool lowercase = false;
};

enum class ShearFallback { HardTruncate, Reject };

struct ShearPolicy {
  int max_tokens = 30;          // T
  int min_clause_chars = 5;     // a clause must be strictly longer than this
  std::string clause_terminators = ".";
  ShearFallback fallback = ShearFallback::HardTruncate;
};

struct ShearResult {
  std::string text;
  bool sheared = false;         // clause extraction or truncation changed the text
  bool used_fallback = false;   // no qualifying clause; hard truncation applied
  int raw_token_count = 0;      // token count before shearing
};

struct Token {
  std::string text;
  size_t begin = 0;  // byte offsets into the source string
  size_t end = 0;
};

std::vector<Token> tokenize(std::string_view text, const TokenizerSpec& spec = {});

int count_tokens(std::string_view text, const TokenizerSpec& spec = {});

// T = round-half-up of the mean token count over the corpus. Throws
// EmptyCorpus on an empty stream.
int compute_shear_limit(const std::vector<std::string>& captions,
                        const TokenizerSpec& spec = {});

// Shortest prefix ending at a terminator whose trimmed length is
// strictly greater than min_clause_chars; nullopt when none exists.
// The returned clause is trimmed of surrounding whitespace.
std::optional<std::string> extract_first_clause(std::string_view text,
                                                const ShearPolicy& policy);

// Truncate to the first max_tokens tokens, then keep the first complete
// clause. When no clause qualifies, HardTruncate rejoins the kept tokens
// with single spaces (re-checking for a clause in the rejoined text so
// the operation is idempotent); Reject throws NoValidClause.
ShearResult shear_caption(std::string_view text, const ShearPolicy& policy,
                          const TokenizerSpec& spec = {});

// Stable digest over all policy + tokenizer fields; recorded in dataset
// manifests so mixed-policy merges can be rejected.
uint64_t shear_policy_digest(const ShearPolicy& policy, const TokenizerSpec& spec = {});

}  // namespace capforge
