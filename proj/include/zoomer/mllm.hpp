// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zoomer/budget.hpp"
#include "zoomer/composer.hpp"
#include "zoomer/rate_limiter.hpp"

namespace zoomer {

enum class ProviderKind { OpenAICompatible, AnthropicCompatible, GeminiCompatible, Mock };

std::string_view to_string(ProviderKind kind) noexcept;
// Accepts openai/anthropic/gemini/mock and the *_compatible spellings.
ProviderKind parse_provider(std::string_view text);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::Mock;
  std::string base_url;  // empty: the provider's public endpoint
  std::string model;
  int max_images = 10;
  double rpm = 0;  // requests per minute; 0 = unlimited
  std::size_t max_payload_bytes = 20u << 20;
  int max_output_tokens = 256;
  // Prepend a one-line text part naming each image before the images.
  bool legend = false;

  std::string effective_base_url() const;
};

struct ChatImage {
  std::shared_ptr<const ComposedImage> image;
  Detail detail = Detail::High;
};

struct ChatRequest {
  std::string text;  // the user question, verbatim
  std::vector<ChatImage> images;
  double temperature = 0.0;
  ProviderKind provider = ProviderKind::Mock;
  std::string correlation_id;
};

// Throws EmptyPlan for plans without images.
ChatRequest make_chat_request(const StrategyPlan& plan, std::string question, ProviderKind provider,
                              std::string correlation_id = {});

struct WirePayload {
  std::string path;  // appended to the base URL
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;  // without credentials
};

// Provider wire body: images base64 PNG in plan order, then the question.
// Throws EmptyPlan, PayloadTooLarge, UnsupportedProvider (mock has no wire format).
WirePayload build_request(const ChatRequest& request, const ProviderConfig& config);
WirePayload build_request(const StrategyPlan& plan, const std::string& question,
                          const ProviderConfig& config);

struct Credentials {
  std::string api_key;
};

// ZOOMER_OPENAI_KEY / ZOOMER_ANTHROPIC_KEY / ZOOMER_GEMINI_KEY.
Credentials credentials_from_env(ProviderKind kind);

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};

  std::chrono::milliseconds delay_for(int retry) const;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::optional<Usage> usage;
  double latency_s = 0;
  int attempts = 0;
  std::string correlation_id;
};

// Parses a provider's success body into text + usage.
ChatResponse parse_response(ProviderKind kind, const std::string& body);

// POSTs the payload, retrying 429 and transient 5xx with exponential backoff.
// Throws AuthError (401/403 or missing key), RateLimited (429 after retries),
// ProviderError (anything else).
ChatResponse send(const WirePayload& payload, const ProviderConfig& config,
                  const Credentials& credentials, const RetryPolicy& retry,
                  RateLimiter* limiter = nullptr);

// Ground truth for the offline mock provider.
struct MockTruth {
  std::string answer;                // option letter
  std::vector<std::string> options;  // letters to guess among
  std::optional<Box> target;         // where the answer is drawn, original coordinates
  double legible_px = 32;            // min rendered side needed to read it
};

struct MockConfig {
  std::uint64_t seed = 0;
  TokenCostModel model;           // provider-side rescaling and usage figures
  double base_latency_s = 0.25;   // modelled, so replays are reproducible
  double latency_per_token_s = 0.001;
};

// Rendered size of the target in the image the provider would see, or 0 when
// no placement contains the target.
double rendered_target_px(const ChatImage& image, const Box& target, const TokenCostModel& model);

// Correct iff some image renders the target at >= legible_px; otherwise a
// uniformly random option drawn from an RNG seeded by (seed, correlation id,
// question). Throws MissingGroundTruth.
ChatResponse mock_answer(const ChatRequest& request, const MockTruth& truth, const MockConfig& config);

// Dispatches plans to one provider; safe to share across threads.
class ChatClient {
 public:
  ChatClient(ProviderConfig config, Credentials credentials, RetryPolicy retry, MockConfig mock = {});

  // Latency covers request construction and the network round trip.
  ChatResponse ask(const StrategyPlan& plan, const std::string& question,
                   const std::optional<MockTruth>& truth = std::nullopt,
                   const std::string& correlation_id = {});

  const ProviderConfig& config() const noexcept { return config_; }

 private:
  ProviderConfig config_;
  Credentials credentials_;
  RetryPolicy retry_;
  MockConfig mock_;
  RateLimiter limiter_;
};

// Stable 64-bit FNV-1a, used for seeding.
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 1469598103934665603ull) noexcept;

}  // namespace zoomer
