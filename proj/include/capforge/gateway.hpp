#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace capforge {

enum class Protocol { OpenAICompat, Mock };

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_base_ms = 100;
  double backoff_jitter_fraction = 0.1;
  std::set<int> retryable_statuses = {429, 500, 502, 503, 504};
};

// One model g_k in the pool.
struct CaptionerEndpoint {
  std::string model_id;
  std::string base_url;
  std::string auth_env_var;
  Protocol protocol = Protocol::Mock;
  int timeout_ms = 30000;
  int max_in_flight = 4;
  RetryPolicy retry;
};

struct GenerationConfig {
  std::string prompt_template = "Describe the <image> in English:";
  int max_new_tokens = 30;
  int num_beams = 1;  // config metadata; with do_sample=false this is greedy
  bool do_sample = false;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> min_new_tokens;
  std::optional<double> repetition_penalty;
  std::optional<int64_t> seed;
};

enum class CaptionErrorKind {
  Timeout,
  RateLimited,
  HttpStatus,
  MalformedResponse,
  EmptyCaption,
  Transport,
};

std::string to_string(CaptionErrorKind kind);

struct CaptionError {
  CaptionErrorKind kind = CaptionErrorKind::Transport;
  int status = 0;  // HTTP status when kind is HttpStatus/RateLimited
  std::string message;
};

// Per-call result; endpoint failures are values, not exceptions, so a
// multi-view fanout can surface per-slot errors.
struct CaptionOutcome {
  std::optional<std::string> text;
  std::optional<CaptionError> error;
  int attempts = 0;

  bool ok() const { return text.has_value(); }
};

// Counting gate enforcing max_in_flight per endpoint.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    std::lock_guard lock(mu_);
    --active_;
    cv_.notify_one();
  }

 private:
  int limit_;
  int active_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

// A pool member: endpoint + its generation settings + shared in-flight gate.
class CaptionerClient {
 public:
  CaptionerClient(CaptionerEndpoint endpoint, GenerationConfig config);

  const CaptionerEndpoint& endpoint() const { return endpoint_; }
  const GenerationConfig& config() const { return config_; }

  // One captioning call with retry/backoff; never returns empty text on
  // success. Thread-safe; concurrent calls respect max_in_flight.
  CaptionOutcome caption_image(std::string_view image_bytes,
                               const std::string& image_mime) const;

 private:
  CaptionOutcome attempt_once(std::string_view image_bytes,
                              const std::string& image_mime) const;
  CaptionOutcome mock_caption(std::string_view image_bytes) const;

  CaptionerEndpoint endpoint_;
  GenerationConfig config_;
  mutable std::shared_ptr<InFlightLimiter> limiter_;
};

// Queries every pool member for one image; output order equals pool
// order and slot k carries its own success or error.
std::vector<CaptionOutcome> caption_multiview(
    const std::vector<std::shared_ptr<CaptionerClient>>& pool,
    std::string_view image_bytes, const std::string& image_mime);

// Deterministic mock caption text: a pure function of
// (model_id, seed, image digest). Exposed so tests and the corpus-stats
// suite can compute expected word counts exactly.
std::string mock_caption_text(const std::string& model_id, int64_t seed,
                              uint64_t image_digest);

// The per-model vocabulary the mock leans on; each model id maps to a
// distinct style word set so frequency tables separate by model.
const std::vector<std::string>& mock_style_words(const std::string& model_id);

// Target pre-shear caption length for a mock model. Four well-known
// model names get fixed lengths (minigpt4 and llava long, otter and
// qwen-vl short); unknown ids get a hash-derived length in [20, 80).
int mock_target_tokens(const std::string& model_id);

// Request body for the OpenAI-compatible wire; exposed for tests.
std::string build_chat_request_body(const std::string& model_id,
                                    const GenerationConfig& config,
                                    std::string_view image_bytes,
                                    const std::string& image_mime);

std::string base64_encode(std::string_view data);

}  // namespace capforge
