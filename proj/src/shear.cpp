#include "capforge/shear.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "capforge/errors.hpp"
#include "capforge/hash.hpp"

namespace capforge {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Word characters: alphanumerics plus any non-ASCII byte. Everything
// else printable is punctuation and becomes a single-char token.
bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<Token> tokenize(std::string_view text, const TokenizerSpec& spec) {
  std::vector<Token> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    size_t begin = i;
    if (is_word_char(c)) {
      while (i < n) {
        unsigned char cur = static_cast<unsigned char>(text[i]);
        if (is_word_char(cur)) {
          ++i;
        } else if (cur == '\'' && i + 1 < n && i > begin &&
                   is_word_char(static_cast<unsigned char>(text[i + 1]))) {
          // internal apostrophe: man's, don't
          ++i;
        } else {
          break;
        }
      }
    } else {
      ++i;  // punctuation: one char, one token
    }
    Token tok;
    tok.text.assign(text.substr(begin, i - begin));
    if (spec.lowercase) {
      std::transform(tok.text.begin(), tok.text.end(), tok.text.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    }
    tok.begin = begin;
    tok.end = i;
    out.push_back(std::move(tok));
  }
  return out;
}

int count_tokens(std::string_view text, const TokenizerSpec& spec) {
  return static_cast<int>(tokenize(text, spec).size());
}

int compute_shear_limit(const std::vector<std::string>& captions,
                        const TokenizerSpec& spec) {
  if (captions.empty()) throw EmptyCorpus();
  double total = 0.0;
  for (const auto& c : captions) total += count_tokens(c, spec);
  double mean = total / static_cast<double>(captions.size());
  int t = static_cast<int>(std::floor(mean + 0.5));
  return std::max(t, 1);
}

std::optional<std::string> extract_first_clause(std::string_view text,
                                                const ShearPolicy& policy) {
  for (size_t i = 0; i < text.size(); ++i) {
    if (policy.clause_terminators.find(text[i]) == std::string::npos) continue;
    std::string_view prefix = trim(text.substr(0, i + 1));
    if (static_cast<int>(prefix.size()) > policy.min_clause_chars) {
      return std::string(prefix);
    }
  }
  return std::nullopt;
}

ShearResult shear_caption(std::string_view text, const ShearPolicy& policy,
                          const TokenizerSpec& spec) {
  std::vector<Token> tokens = tokenize(text, spec);
  ShearResult result;
  result.raw_token_count = static_cast<int>(tokens.size());

  std::string_view trimmed = trim(text);
  const size_t limit = static_cast<size_t>(policy.max_tokens);

  // Keep original spacing while truncating: cut at the end of token T.
  std::string_view truncated = trimmed;
  if (tokens.size() > limit) {
    truncated = trim(text.substr(0, tokens[limit - 1].end));
  }

  if (auto clause = extract_first_clause(truncated, policy)) {
    result.text = std::move(*clause);
    result.sheared = result.text != trimmed;
    return result;
  }

  if (policy.fallback == ShearFallback::Reject) throw NoValidClause();

  result.used_fallback = true;
  std::string rejoined;
  for (size_t k = 0; k < tokens.size() && k < limit; ++k) {
    if (!rejoined.empty()) rejoined += ' ';
    rejoined += tokens[k].text;
  }
  // Rejoining can move a terminator past the minimum-length threshold;
  // take that clause so shearing twice equals shearing once.
  if (auto clause = extract_first_clause(rejoined, policy)) {
    result.text = std::move(*clause);
  } else {
    result.text = std::move(rejoined);
  }
  result.sheared = true;
  return result;
}

uint64_t shear_policy_digest(const ShearPolicy& policy, const TokenizerSpec& spec) {
  std::string repr = "max_tokens=" + std::to_string(policy.max_tokens) +
                     ";min_clause_chars=" + std::to_string(policy.min_clause_chars) +
                     ";terminators=" + policy.clause_terminators +
                     ";fallback=" + (policy.fallback == ShearFallback::HardTruncate ? "hard" : "reject") +
                     ";lowercase=" + (spec.lowercase ? "1" : "0");
  return fnv1a64(repr);
}

}  // namespace capforge
