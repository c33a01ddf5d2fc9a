// SPDX-License-Identifier: Apache-2.0

#include "zoomer/mllm.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <json.hpp>
#include <random>
#include <thread>

#include "zoomer/error.hpp"

namespace zoomer {

using nlohmann::json;

std::string_view to_string(ProviderKind kind) noexcept {
  switch (kind) {
    case ProviderKind::OpenAICompatible: return "openai_compatible";
    case ProviderKind::AnthropicCompatible: return "anthropic_compatible";
    case ProviderKind::GeminiCompatible: return "gemini_compatible";
    case ProviderKind::Mock: return "mock";
  }
  return "mock";
}

ProviderKind parse_provider(std::string_view text) {
  if (text == "openai" || text == "openai_compatible") return ProviderKind::OpenAICompatible;
  if (text == "anthropic" || text == "anthropic_compatible") return ProviderKind::AnthropicCompatible;
  if (text == "gemini" || text == "gemini_compatible") return ProviderKind::GeminiCompatible;
  if (text == "mock") return ProviderKind::Mock;
  throw Error(ErrorCode::UnsupportedProvider, "unknown provider: " + std::string(text));
}

std::string ProviderConfig::effective_base_url() const {
  if (!base_url.empty()) return base_url;
  switch (kind) {
    case ProviderKind::OpenAICompatible: return "https://api.openai.com";
    case ProviderKind::AnthropicCompatible: return "https://api.anthropic.com";
    case ProviderKind::GeminiCompatible: return "https://generativelanguage.googleapis.com";
    case ProviderKind::Mock: return "";
  }
  return "";
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ChatRequest make_chat_request(const StrategyPlan& plan, std::string question, ProviderKind provider,
                              std::string correlation_id) {
  if (plan.images.empty()) throw Error(ErrorCode::EmptyPlan, "plan has no images");
  ChatRequest req;
  req.text = std::move(question);
  req.provider = provider;
  req.correlation_id = std::move(correlation_id);
  for (const auto& img : plan.images) {
    req.images.push_back({std::make_shared<const ComposedImage>(img), plan.detail});
  }
  return req;
}

namespace {

std::string legend_line(const ChatRequest& req) {
  std::string line = "Images:";
  for (std::size_t i = 0; i < req.images.size(); ++i) {
    std::string kind(to_string(req.images[i].image->kind));
    std::replace(kind.begin(), kind.end(), '_', ' ');
    line += (i ? ", " : " ") + std::to_string(i + 1) + " = " + kind;
  }
  return line + ".";
}

}  // namespace

WirePayload build_request(const ChatRequest& req, const ProviderConfig& config) {
  if (req.images.empty()) throw Error(ErrorCode::EmptyPlan, "request has no images");
  if (config.kind == ProviderKind::Mock) {
    throw Error(ErrorCode::UnsupportedProvider, "the mock provider has no wire format");
  }
  if (static_cast<int>(req.images.size()) > config.max_images) {
    throw Error(ErrorCode::PayloadTooLarge, std::to_string(req.images.size()) +
                                                " images exceed the provider maximum of " +
                                                std::to_string(config.max_images));
  }

  std::vector<std::string> encoded;
  encoded.reserve(req.images.size());
  for (const auto& img : req.images) encoded.push_back(base64_encode(encode_png(img.image->pixels)));

  WirePayload out;
  out.headers.emplace_back("Content-Type", "application/json");
  json body;
  switch (config.kind) {
    case ProviderKind::OpenAICompatible: {
      json content = json::array();
      if (config.legend) content.push_back({{"type", "text"}, {"text", legend_line(req)}});
      for (std::size_t i = 0; i < encoded.size(); ++i) {
        content.push_back({{"type", "image_url"},
                           {"image_url",
                            {{"url", "data:image/png;base64," + encoded[i]},
                             {"detail", to_string(req.images[i].detail)}}}});
      }
      content.push_back({{"type", "text"}, {"text", req.text}});
      body = {{"model", config.model},
              {"temperature", req.temperature},
              {"max_tokens", config.max_output_tokens},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
      out.path = "/v1/chat/completions";
      break;
    }
    case ProviderKind::AnthropicCompatible: {
      json content = json::array();
      if (config.legend) content.push_back({{"type", "text"}, {"text", legend_line(req)}});
      for (const auto& data : encoded) {
        content.push_back(
            {{"type", "image"},
             {"source", {{"type", "base64"}, {"media_type", "image/png"}, {"data", data}}}});
      }
      content.push_back({{"type", "text"}, {"text", req.text}});
      body = {{"model", config.model},
              {"temperature", req.temperature},
              {"max_tokens", config.max_output_tokens},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
      out.path = "/v1/messages";
      out.headers.emplace_back("anthropic-version", "2023-06-01");
      break;
    }
    case ProviderKind::GeminiCompatible: {
      json parts = json::array();
      if (config.legend) parts.push_back({{"text", legend_line(req)}});
      for (const auto& data : encoded) {
        parts.push_back({{"inline_data", {{"mime_type", "image/png"}, {"data", data}}}});
      }
      parts.push_back({{"text", req.text}});
      body = {{"contents", json::array({{{"role", "user"}, {"parts", parts}}})},
              {"generationConfig",
               {{"temperature", req.temperature}, {"topK", 1}, {"maxOutputTokens", config.max_output_tokens}}}};
      out.path = "/v1beta/models/" + config.model + ":generateContent";
      break;
    }
    case ProviderKind::Mock: break;
  }
  out.body = body.dump();
  if (out.body.size() > config.max_payload_bytes) {
    throw Error(ErrorCode::PayloadTooLarge, "payload of " + std::to_string(out.body.size()) +
                                                " bytes exceeds " + std::to_string(config.max_payload_bytes));
  }
  return out;
}

WirePayload build_request(const StrategyPlan& plan, const std::string& question,
                          const ProviderConfig& config) {
  return build_request(make_chat_request(plan, question, config.kind), config);
}

Credentials credentials_from_env(ProviderKind kind) {
  const char* var = nullptr;
  switch (kind) {
    case ProviderKind::OpenAICompatible: var = "ZOOMER_OPENAI_KEY"; break;
    case ProviderKind::AnthropicCompatible: var = "ZOOMER_ANTHROPIC_KEY"; break;
    case ProviderKind::GeminiCompatible: var = "ZOOMER_GEMINI_KEY"; break;
    case ProviderKind::Mock: return {};
  }
  const char* value = std::getenv(var);
  return {value ? value : ""};
}

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
  double ms = double(base_delay.count());
  for (int i = 0; i < retry; ++i) ms *= multiplier;
  return std::chrono::milliseconds(static_cast<long long>(std::min(ms, double(max_delay.count()))));
}

ChatResponse parse_response(ProviderKind kind, const std::string& body) {
  ChatResponse out;
  try {
    const auto j = json::parse(body);
    switch (kind) {
      case ProviderKind::OpenAICompatible:
        out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) {
          out.usage = Usage{j["usage"].value("prompt_tokens", 0), j["usage"].value("completion_tokens", 0)};
        }
        break;
      case ProviderKind::AnthropicCompatible:
        for (const auto& block : j.at("content")) {
          if (block.value("type", "") == "text") out.text += block.at("text").get<std::string>();
        }
        if (j.contains("usage")) {
          out.usage = Usage{j["usage"].value("input_tokens", 0), j["usage"].value("output_tokens", 0)};
        }
        break;
      case ProviderKind::GeminiCompatible:
        for (const auto& part : j.at("candidates").at(0).at("content").at("parts")) {
          if (part.contains("text")) out.text += part["text"].get<std::string>();
        }
        if (j.contains("usageMetadata")) {
          out.usage = Usage{j["usageMetadata"].value("promptTokenCount", 0),
                            j["usageMetadata"].value("candidatesTokenCount", 0)};
        }
        break;
      case ProviderKind::Mock:
        out.text = j.at("text").get<std::string>();
        break;
    }
  } catch (const std::exception& e) {
    throw ProviderFailure(ErrorCode::ProviderError, 200, body.substr(0, 200),
                          std::string("malformed response: ") + e.what());
  }
  return out;
}

ChatResponse send(const WirePayload& payload, const ProviderConfig& config,
                  const Credentials& credentials, const RetryPolicy& retry, RateLimiter* limiter) {
  if (config.kind == ProviderKind::Mock) {
    throw Error(ErrorCode::UnsupportedProvider, "the mock provider is answered in process");
  }
  if (credentials.api_key.empty()) {
    throw ProviderFailure(ErrorCode::AuthError, 0, "", "no API key for " + std::string(to_string(config.kind)));
  }

  const std::string base = config.effective_base_url();
  const auto scheme = base.find("://");
  const auto slash = scheme == std::string::npos ? std::string::npos : base.find('/', scheme + 3);
  const std::string host = base.substr(0, slash);
  std::string prefix = slash == std::string::npos ? "" : base.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Headers headers;
  for (const auto& [k, v] : payload.headers) {
    if (k != "Content-Type") headers.emplace(k, v);
  }
  switch (config.kind) {
    case ProviderKind::OpenAICompatible: headers.emplace("Authorization", "Bearer " + credentials.api_key); break;
    case ProviderKind::AnthropicCompatible: headers.emplace("x-api-key", credentials.api_key); break;
    case ProviderKind::GeminiCompatible: headers.emplace("x-goog-api-key", credentials.api_key); break;
    case ProviderKind::Mock: break;
  }

  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    if (limiter) limiter->acquire();
    httplib::Client client(host);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(std::chrono::seconds(120));
    client.set_write_timeout(std::chrono::seconds(60));
    auto res = client.Post(prefix + payload.path, headers, payload.body, "application/json");

    const int status = res ? res->status : 0;
    const bool transient = !res || status == 429 || status == 500 || status == 502 ||
                           status == 503 || status == 504 || status == 529;
    if (res && status == 200) {
      auto out = parse_response(config.kind, res->body);
      out.attempts = attempt + 1;
      out.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return out;
    }
    const std::string excerpt = res ? res->body.substr(0, 200) : httplib::to_string(res.error());
    if (status == 401 || status == 403) {
      throw ProviderFailure(ErrorCode::AuthError, status, excerpt, "authentication rejected");
    }
    if (!transient || attempt >= retry.max_retries) {
      if (status == 429) {
        throw ProviderFailure(ErrorCode::RateLimited, status, excerpt,
                              "rate limited after " + std::to_string(attempt + 1) + " attempts");
      }
      throw ProviderFailure(ErrorCode::ProviderError, status, excerpt,
                            "HTTP " + std::to_string(status) + " after " + std::to_string(attempt + 1) +
                                " attempts");
    }
    auto delay = retry.delay_for(attempt);
    if (res && res->has_header("Retry-After")) {
      const auto seconds = std::atof(res->get_header_value("Retry-After").c_str());
      delay = std::min(retry.max_delay,
                       std::max(delay, std::chrono::milliseconds(static_cast<long long>(seconds * 1000))));
    }
    std::this_thread::sleep_for(delay);
  }
}

double rendered_target_px(const ChatImage& image, const Box& target, const TokenCostModel& model) {
  const auto& img = *image.image;
  const auto view = provider_view_size(img.width(), img.height(), model, image.detail);
  const double provider_scale = double(view.width) / img.width();
  double best = 0;
  for (const auto& p : img.placements) {
    if (!p.source.contains(target)) continue;
    const double side = std::min(target.width(), target.height());
    best = std::max(best, side * img.shrink_factor * provider_scale);
  }
  return best;
}

ChatResponse mock_answer(const ChatRequest& request, const MockTruth& truth, const MockConfig& config) {
  if (truth.answer.empty() || truth.options.empty() || !truth.target) {
    throw Error(ErrorCode::MissingGroundTruth, "mock provider needs an answer, options and target box");
  }
  bool legible = false;
  int prompt_tokens = 0;
  for (const auto& img : request.images) {
    prompt_tokens += estimate_image_tokens(img.image->width(), img.image->height(), config.model, img.detail);
    if (rendered_target_px(img, *truth.target, config.model) >= truth.legible_px) legible = true;
  }

  ChatResponse out;
  out.correlation_id = request.correlation_id;
  out.attempts = 1;
  if (legible) {
    out.text = truth.answer;
  } else {
    std::mt19937_64 rng(fnv1a(request.text, fnv1a(request.correlation_id, config.seed ^ 0x9e3779b97f4a7c15ull)));
    out.text = truth.options[rng() % truth.options.size()];
  }
  out.usage = Usage{prompt_tokens, 1};
  out.latency_s = config.base_latency_s + config.latency_per_token_s * prompt_tokens;
  return out;
}

ChatClient::ChatClient(ProviderConfig config, Credentials credentials, RetryPolicy retry, MockConfig mock)
    : config_(std::move(config)),
      credentials_(std::move(credentials)),
      retry_(retry),
      mock_(std::move(mock)),
      limiter_(config_.rpm) {}

ChatResponse ChatClient::ask(const StrategyPlan& plan, const std::string& question,
                             const std::optional<MockTruth>& truth, const std::string& correlation_id) {
  const auto start = std::chrono::steady_clock::now();
  auto request = make_chat_request(plan, question, config_.kind, correlation_id);
  if (config_.kind == ProviderKind::Mock) {
    if (int(request.images.size()) > config_.max_images) {
      throw Error(ErrorCode::PayloadTooLarge, std::to_string(request.images.size()) + " images exceed the limit of " +
                                                  std::to_string(config_.max_images));
    }
    if (!truth) throw Error(ErrorCode::MissingGroundTruth, "mock provider needs ground truth");
    limiter_.acquire();
    return mock_answer(request, *truth, mock_);
  }
  const auto payload = build_request(request, config_);
  auto response = send(payload, config_, credentials_, retry_, &limiter_);
  response.correlation_id = correlation_id;
  response.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return response;
}

}  // namespace zoomer
