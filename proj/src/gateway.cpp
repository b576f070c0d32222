#include "capforge/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <future>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "capforge/hash.hpp"

namespace capforge {

using nlohmann::json;

std::string to_string(CaptionErrorKind kind) {
  switch (kind) {
    case CaptionErrorKind::Timeout: return "timeout";
    case CaptionErrorKind::RateLimited: return "rate_limited";
    case CaptionErrorKind::HttpStatus: return "http_status";
    case CaptionErrorKind::MalformedResponse: return "malformed_response";
    case CaptionErrorKind::EmptyCaption: return "empty_caption";
    case CaptionErrorKind::Transport: return "transport";
  }
  return "unknown";
}

std::string base64_encode(std::string_view data) {
  static const char* alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= data.size()) {
    uint32_t v = (static_cast<unsigned char>(data[i]) << 16) |
                 (static_cast<unsigned char>(data[i + 1]) << 8) |
                 static_cast<unsigned char>(data[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
    i += 3;
  }
  size_t rem = data.size() - i;
  if (rem == 1) {
    uint32_t v = static_cast<unsigned char>(data[i]) << 16;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += "==";
  } else if (rem == 2) {
    uint32_t v = (static_cast<unsigned char>(data[i]) << 16) |
                 (static_cast<unsigned char>(data[i + 1]) << 8);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

namespace {

const std::vector<std::string> kGenericNouns = {
    "man",   "woman", "dog",   "street", "sky",    "tree",  "table",
    "water", "building", "grass", "car",  "mountain", "beach", "room",
    "window", "light", "field", "city",  "boat",   "bird"};

const std::vector<std::string> kFallbackStyle = {
    "quiet",  "bright", "dusty",  "narrow", "golden", "distant", "misty",
    "broad",  "steep",  "pale",   "worn",   "calm",   "rough",   "deep",
    "faded",  "open",   "low",    "wide",   "soft",   "sharp",
    "plain",  "tall",   "thin",   "warm",   "cool",   "dark",    "clear",
    "heavy",  "round",  "flat",   "still"};

struct MockProfile {
  std::vector<std::string> style;
  int target_tokens;
};

const std::unordered_map<std::string, MockProfile>& known_profiles() {
  static const std::unordered_map<std::string, MockProfile> profiles = {
      {"minigpt4",
       {{"ornate", "serene", "vivid", "intricate", "majestic", "luminous",
         "tranquil", "bustling"},
        90}},
      {"otter",
       {{"cozy", "rustic", "weathered", "cheerful", "shaded", "sunny",
         "crowded", "tidy"},
        40}},
      {"qwen-vl",
       {{"modern", "spacious", "vibrant", "scenic", "urban", "coastal",
         "wooden", "stone"},
        30}},
      {"llava",
       {{"gentle", "sprawling", "shadowy", "gleaming", "verdant", "ancient",
         "foggy", "radiant"},
        80}},
  };
  return profiles;
}

}  // namespace

const std::vector<std::string>& mock_style_words(const std::string& model_id) {
  const auto& profiles = known_profiles();
  if (auto it = profiles.find(model_id); it != profiles.end()) return it->second.style;
  // Unknown id: pick 8 distinct fallback words by hash.
  static std::mutex mu;
  static std::unordered_map<std::string, std::vector<std::string>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[model_id];
  if (slot.empty()) {
    SplitMix64 rng(fnv1a64(model_id));
    std::vector<std::string> pool = kFallbackStyle;
    for (int k = 0; k < 8; ++k) {
      size_t idx = rng.next_below(pool.size());
      slot.push_back(pool[idx]);
      pool.erase(pool.begin() + static_cast<long>(idx));
    }
  }
  return slot;
}

int mock_target_tokens(const std::string& model_id) {
  const auto& profiles = known_profiles();
  if (auto it = profiles.find(model_id); it != profiles.end())
    return it->second.target_tokens;
  return 20 + static_cast<int>(fnv1a64(model_id) % 60);
}

std::string mock_caption_text(const std::string& model_id, int64_t seed,
                              uint64_t image_digest) {
  SplitMix64 rng(mix64(fnv1a64(model_id) ^ mix64(static_cast<uint64_t>(seed))) ^
                 mix64(image_digest));
  const auto& style = mock_style_words(model_id);
  const int target = mock_target_tokens(model_id);

  size_t style_cursor = rng.next_below(style.size());
  auto next_style = [&] {
    const std::string& w = style[style_cursor];
    style_cursor = (style_cursor + 1) % style.size();
    return w;
  };
  auto next_noun = [&] { return kGenericNouns[rng.next_below(kGenericNouns.size())]; };

  std::string out;
  int tokens = 0;
  auto push = [&](const std::string& w) {
    if (!out.empty()) out += ' ';
    out += w;
    ++tokens;
  };
  while (tokens < target) {
    // One sentence: "the <style> <noun> with a <style> <style> <noun>."
    push(rng.next_below(2) ? "the" : "a");
    push(next_style());
    push(next_noun());
    push("with");
    push(rng.next_below(2) ? "a" : "the");
    push(next_style());
    push(next_style());
    push(next_noun());
    out += '.';
    ++tokens;  // terminator counts as a token
  }
  return out;
}

std::string build_chat_request_body(const std::string& model_id,
                                    const GenerationConfig& config,
                                    std::string_view image_bytes,
                                    const std::string& image_mime) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", config.prompt_template}});
  content.push_back(
      {{"type", "image_url"},
       {"image_url",
        {{"url", "data:" + image_mime + ";base64," + base64_encode(image_bytes)}}}});
  json body = {{"model", model_id},
               {"messages", json::array({json{{"role", "user"}, {"content", std::move(content)}}})},
               {"max_tokens", config.max_new_tokens}};
  if (config.do_sample) {
    if (config.temperature) body["temperature"] = *config.temperature;
    if (config.top_p) body["top_p"] = *config.top_p;
  }
  if (config.seed) body["seed"] = *config.seed;
  return body.dump();
}

CaptionerClient::CaptionerClient(CaptionerEndpoint endpoint, GenerationConfig config)
    : endpoint_(std::move(endpoint)),
      config_(std::move(config)),
      limiter_(std::make_shared<InFlightLimiter>(endpoint_.max_in_flight)) {}

CaptionOutcome CaptionerClient::mock_caption(std::string_view image_bytes) const {
  CaptionOutcome outcome;
  uint64_t digest = fnv1a64(image_bytes);
  outcome.text = mock_caption_text(endpoint_.model_id, config_.seed.value_or(0), digest);
  outcome.attempts = 1;
  return outcome;
}

CaptionOutcome CaptionerClient::attempt_once(std::string_view image_bytes,
                                             const std::string& image_mime) const {
  CaptionOutcome outcome;
  outcome.attempts = 1;

  httplib::Client client(endpoint_.base_url);
  client.set_connection_timeout(0, endpoint_.timeout_ms * 1000);
  client.set_read_timeout(0, endpoint_.timeout_ms * 1000);
  client.set_write_timeout(0, endpoint_.timeout_ms * 1000);
  httplib::Headers headers;
  if (!endpoint_.auth_env_var.empty()) {
    if (const char* token = std::getenv(endpoint_.auth_env_var.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  std::string body = build_chat_request_body(endpoint_.model_id, config_, image_bytes, image_mime);
  auto res = client.Post("/v1/chat/completions", headers, body, "application/json");

  if (!res) {
    auto err = res.error();
    bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                   err == httplib::Error::Write;
    outcome.error = CaptionError{timeout ? CaptionErrorKind::Timeout : CaptionErrorKind::Transport,
                                 0, httplib::to_string(err)};
    return outcome;
  }
  if (res->status == 429) {
    CaptionError err{CaptionErrorKind::RateLimited, 429, "rate limited"};
    if (res->has_header("Retry-After"))
      err.message = res->get_header_value("Retry-After");
    outcome.error = err;
    return outcome;
  }
  if (res->status != 200) {
    outcome.error = CaptionError{CaptionErrorKind::HttpStatus, res->status,
                                 "http status " + std::to_string(res->status)};
    return outcome;
  }

  json obj = json::parse(res->body, nullptr, false);
  if (obj.is_discarded() || !obj.contains("choices") || !obj["choices"].is_array() ||
      obj["choices"].empty() || !obj["choices"][0].contains("message") ||
      !obj["choices"][0]["message"].contains("content") ||
      !obj["choices"][0]["message"]["content"].is_string()) {
    outcome.error = CaptionError{CaptionErrorKind::MalformedResponse, res->status,
                                 "response missing choices[0].message.content"};
    return outcome;
  }
  std::string text = obj["choices"][0]["message"]["content"].get<std::string>();
  size_t b = text.find_first_not_of(" \t\r\n");
  size_t e = text.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) {
    outcome.error = CaptionError{CaptionErrorKind::EmptyCaption, res->status, "empty caption"};
    return outcome;
  }
  outcome.text = text.substr(b, e - b + 1);
  return outcome;
}

CaptionOutcome CaptionerClient::caption_image(std::string_view image_bytes,
                                              const std::string& image_mime) const {
  if (endpoint_.protocol == Protocol::Mock) {
    limiter_->acquire();
    auto outcome = mock_caption(image_bytes);
    limiter_->release();
    return outcome;
  }

  thread_local SplitMix64 jitter_rng(
      mix64(static_cast<uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())) ^
      mix64(std::hash<std::thread::id>{}(std::this_thread::get_id())));

  const RetryPolicy& retry = endpoint_.retry;
  CaptionOutcome last;
  for (int attempt = 1; attempt <= retry.max_attempts; ++attempt) {
    limiter_->acquire();
    CaptionOutcome outcome = attempt_once(image_bytes, image_mime);
    limiter_->release();
    outcome.attempts = attempt;
    if (outcome.ok()) return outcome;
    last = outcome;

    const CaptionError& err = *outcome.error;
    bool retryable = false;
    long delay_ms = retry.backoff_base_ms * (1L << (attempt - 1));
    switch (err.kind) {
      case CaptionErrorKind::Timeout:
      case CaptionErrorKind::Transport:
      case CaptionErrorKind::EmptyCaption:
        retryable = true;
        break;
      case CaptionErrorKind::RateLimited: {
        retryable = true;
        // server-suggested delay, seconds
        char* end = nullptr;
        long suggested = std::strtol(err.message.c_str(), &end, 10);
        if (end && end != err.message.c_str() && suggested > 0)
          delay_ms = suggested * 1000;
        break;
      }
      case CaptionErrorKind::HttpStatus:
        retryable = retry.retryable_statuses.count(err.status) > 0;
        break;
      case CaptionErrorKind::MalformedResponse:
        retryable = false;
        break;
    }
    if (!retryable || attempt == retry.max_attempts) break;
    delay_ms = static_cast<long>(delay_ms *
                                 (1.0 + retry.backoff_jitter_fraction * jitter_rng.next_double()));
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
  }
  return last;
}

std::vector<CaptionOutcome> caption_multiview(
    const std::vector<std::shared_ptr<CaptionerClient>>& pool,
    std::string_view image_bytes, const std::string& image_mime) {
  std::vector<std::future<CaptionOutcome>> futures;
  futures.reserve(pool.size());
  for (const auto& client : pool) {
    futures.push_back(std::async(std::launch::async, [&, client] {
      return client->caption_image(image_bytes, image_mime);
    }));
  }
  std::vector<CaptionOutcome> out;
  out.reserve(pool.size());
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

}  // namespace capforge
