// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <json.hpp>

#include <atomic>
#include <cstdlib>

#include "stub_server.hpp"
#include "support.hpp"
#include "zoomer/error.hpp"
#include "zoomer/mllm.hpp"

using namespace zoomer;
using nlohmann::json;
using oracle::Gen;

namespace {

const TokenCostModel kModel{};
const ComposeConfig kCompose{};

StrategyPlan patches_plan(const Raster& img, int crops) {
  std::vector<ScoredBox> regions;
  for (int i = 0; i < crops; ++i) regions.push_back({{20.0 + 70 * i, 20, 60.0 + 70 * i, 60}, 0.9 - 0.1 * i, "x", {}});
  StrategyConfig cfg;
  cfg.strategy = Strategy::Patches;
  return plan_prompt(img, regions, cfg, kCompose, kModel);
}

StrategyPlan local_plan(const Raster& img) {
  StrategyConfig cfg;
  const std::vector<ScoredBox> regions{{{10, 10, 50, 40}, 0.9, "x", {}}};
  return plan_prompt(img, regions, cfg, kCompose, kModel);
}

ProviderConfig provider(ProviderKind kind, std::string base_url = {}) {
  ProviderConfig c;
  c.kind = kind;
  c.model = "test-model";
  c.base_url = std::move(base_url);
  return c;
}

// Image parts of an OpenAI-style body, decoded back to rasters.
std::vector<Raster> openai_images(const json& body) {
  std::vector<Raster> out;
  for (const auto& part : body["messages"][0]["content"]) {
    if (part["type"] != "image_url") continue;
    const std::string url = part["image_url"]["url"];
    const std::string prefix = "data:image/png;base64,";
    EXPECT_EQ(url.rfind(prefix, 0), 0u);
    out.push_back(decode_image(base64_decode(url.substr(prefix.size()))));
  }
  return out;
}

bool same_pixels(const Raster& a, const Raster& b) {
  if (a.width() != b.width() || a.height() != b.height()) return false;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (a.at(x, y) != b.at(x, y)) return false;
    }
  }
  return true;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

RetryPolicy fast_retry(int retries = 3) {
  RetryPolicy r;
  r.max_retries = retries;
  r.base_delay = std::chrono::milliseconds(1);
  r.max_delay = std::chrono::milliseconds(5);
  return r;
}

const char* kOpenAiOk =
    R"({"choices":[{"message":{"role":"assistant","content":"B"}}],"usage":{"prompt_tokens":300,"completion_tokens":1}})";

}  // namespace

TEST(Payload, SingleImagePrecedesQuestion) {
  Gen g(81);
  const auto img = oracle::random_raster(g, 200, 150);
  const auto plan = local_plan(img);
  const auto body = json::parse(build_request(plan, "What is shown?", provider(ProviderKind::OpenAICompatible)).body);
  const auto& content = body["messages"][0]["content"];
  ASSERT_EQ(content.size(), 2u);
  EXPECT_EQ(content[0]["type"], "image_url");
  EXPECT_EQ(content[0]["image_url"]["detail"], "high");
  EXPECT_EQ(content[1]["type"], "text");
  EXPECT_EQ(content[1]["text"], "What is shown?");
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(body["model"], "test-model");
}

TEST(Payload, PatchesKeepPlanOrderGlobalLast) {
  Gen g(82);
  const auto img = oracle::random_raster(g, 300, 100);
  const auto plan = patches_plan(img, 3);
  ASSERT_EQ(plan.images.size(), 4u);
  const auto body = json::parse(build_request(plan, "q", provider(ProviderKind::OpenAICompatible)).body);
  const auto images = openai_images(body);
  ASSERT_EQ(images.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(same_pixels(images[i], plan.images[i].pixels)) << i;
  EXPECT_EQ(plan.images.back().kind, ImageKind::GlobalView);
  EXPECT_EQ(body["messages"][0]["content"].back()["text"], "q");
}

TEST(Payload, AnthropicShape) {
  Gen g(83);
  const auto img = oracle::random_raster(g, 300, 100);
  const auto plan = patches_plan(img, 2);
  const auto wire = build_request(plan, "q", provider(ProviderKind::AnthropicCompatible));
  EXPECT_EQ(wire.path, "/v1/messages");
  EXPECT_NE(std::find(wire.headers.begin(), wire.headers.end(), std::pair<std::string, std::string>{"anthropic-version", "2023-06-01"}),
            wire.headers.end());
  const auto body = json::parse(wire.body);
  const auto& content = body["messages"][0]["content"];
  ASSERT_EQ(content.size(), 4u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(content[i]["type"], "image");
    EXPECT_EQ(content[i]["source"]["media_type"], "image/png");
    const auto raster = decode_image(base64_decode(content[i]["source"]["data"].get<std::string>()));
    EXPECT_TRUE(same_pixels(raster, plan.images[i].pixels));
  }
  EXPECT_EQ(content[3]["text"], "q");
  EXPECT_EQ(body["temperature"], 0.0);
}

TEST(Payload, GeminiShape) {
  Gen g(84);
  const auto img = oracle::random_raster(g, 200, 150);
  const auto wire = build_request(local_plan(img), "q", provider(ProviderKind::GeminiCompatible));
  EXPECT_EQ(wire.path, "/v1beta/models/test-model:generateContent");
  const auto body = json::parse(wire.body);
  const auto& parts = body["contents"][0]["parts"];
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0]["inline_data"]["mime_type"], "image/png");
  EXPECT_EQ(parts[1]["text"], "q");
  EXPECT_EQ(body["generationConfig"]["temperature"], 0.0);
}

TEST(Payload, LowDetailFlag) {
  const Raster img(4096, 3072);
  const auto plan = baseline_plan(img, Baseline::LowDetail, kCompose, kModel);
  const auto body = json::parse(build_request(plan, "q", provider(ProviderKind::OpenAICompatible)).body);
  EXPECT_EQ(body["messages"][0]["content"][0]["image_url"]["detail"], "low");
}

TEST(Payload, LegendPrecedesImages) {
  Gen g(85);
  const auto img = oracle::random_raster(g, 300, 100);
  auto cfg = provider(ProviderKind::OpenAICompatible);
  cfg.legend = true;
  const auto body = json::parse(build_request(patches_plan(img, 1), "q", cfg).body);
  const auto& content = body["messages"][0]["content"];
  ASSERT_EQ(content.size(), 4u);
  EXPECT_EQ(content[0]["text"], "Images: 1 = zoomed crop, 2 = global view.");
}

TEST(Payload, Rejections) {
  StrategyPlan empty;
  EXPECT_EQ(code_of([&] { build_request(empty, "q", provider(ProviderKind::OpenAICompatible)); }), ErrorCode::EmptyPlan);
  EXPECT_EQ(code_of([&] { make_chat_request(empty, "q", ProviderKind::Mock); }), ErrorCode::EmptyPlan);

  Gen g(86);
  const auto img = oracle::random_raster(g, 300, 100);
  auto cfg = provider(ProviderKind::OpenAICompatible);
  cfg.max_images = 3;
  EXPECT_EQ(code_of([&] { build_request(patches_plan(img, 3), "q", cfg); }), ErrorCode::PayloadTooLarge);
  cfg.max_images = 10;
  cfg.max_payload_bytes = 100;
  EXPECT_EQ(code_of([&] { build_request(patches_plan(img, 1), "q", cfg); }), ErrorCode::PayloadTooLarge);
  EXPECT_EQ(code_of([&] { build_request(local_plan(img), "q", provider(ProviderKind::Mock)); }),
            ErrorCode::UnsupportedProvider);
}

TEST(Payload, ByteIdenticalAcrossBuilds) {
  Gen g(87);
  for (int i = 0; i < 4; ++i) {
    const auto img = oracle::random_raster(g, g.between(50, 400), g.between(50, 400));
    const auto plan = local_plan(img);
    for (auto kind : {ProviderKind::OpenAICompatible, ProviderKind::AnthropicCompatible, ProviderKind::GeminiCompatible}) {
      EXPECT_EQ(build_request(plan, "same", provider(kind)).body, build_request(local_plan(img), "same", provider(kind)).body);
    }
  }
}

TEST(Providers, NamesAndEndpoints) {
  EXPECT_EQ(parse_provider("openai"), ProviderKind::OpenAICompatible);
  EXPECT_EQ(parse_provider("anthropic_compatible"), ProviderKind::AnthropicCompatible);
  EXPECT_EQ(parse_provider("gemini"), ProviderKind::GeminiCompatible);
  EXPECT_EQ(parse_provider("mock"), ProviderKind::Mock);
  EXPECT_EQ(code_of([] { parse_provider("llama"); }), ErrorCode::UnsupportedProvider);
  EXPECT_EQ(provider(ProviderKind::OpenAICompatible).effective_base_url(), "https://api.openai.com");
  EXPECT_EQ(provider(ProviderKind::OpenAICompatible, "http://x:1/p").effective_base_url(), "http://x:1/p");
}

TEST(Providers, CredentialsFromEnvironment) {
  ::setenv("ZOOMER_ANTHROPIC_KEY", "sk-test", 1);
  EXPECT_EQ(credentials_from_env(ProviderKind::AnthropicCompatible).api_key, "sk-test");
  ::unsetenv("ZOOMER_ANTHROPIC_KEY");
  EXPECT_EQ(credentials_from_env(ProviderKind::AnthropicCompatible).api_key, "");
}

TEST(Response, ParsesEachProvider) {
  auto r = parse_response(ProviderKind::OpenAICompatible, kOpenAiOk);
  EXPECT_EQ(r.text, "B");
  ASSERT_TRUE(r.usage);
  EXPECT_EQ(r.usage->prompt_tokens, 300);

  r = parse_response(ProviderKind::AnthropicCompatible,
                     R"({"content":[{"type":"text","text":"C"}],"usage":{"input_tokens":12,"output_tokens":2}})");
  EXPECT_EQ(r.text, "C");
  EXPECT_EQ(r.usage->prompt_tokens, 12);
  EXPECT_EQ(r.usage->completion_tokens, 2);

  r = parse_response(ProviderKind::GeminiCompatible,
                     R"({"candidates":[{"content":{"parts":[{"text":"D"}]}}],"usageMetadata":{"promptTokenCount":7,"candidatesTokenCount":1}})");
  EXPECT_EQ(r.text, "D");
  EXPECT_EQ(r.usage->prompt_tokens, 7);

  r = parse_response(ProviderKind::OpenAICompatible, R"({"choices":[{"message":{"content":"A"}}]})");
  EXPECT_FALSE(r.usage);

  try {
    parse_response(ProviderKind::OpenAICompatible, "{not json");
    FAIL();
  } catch (const ProviderFailure& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderError);
    EXPECT_EQ(e.body_excerpt(), "{not json");
  }
}

TEST(Send, RetriesRateLimitThenSucceeds) {
  oracle::StubServer stub;
  std::atomic<int> calls{0};
  std::string auth, path;
  stub.server().Post(R"(/prefix/v1/chat/completions)", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    path = req.path;
    if (++calls <= 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    res.set_content(kOpenAiOk, "application/json");
  });
  stub.start();
  Gen g(88);
  const auto payload = build_request(local_plan(oracle::random_raster(g, 100, 100)), "q",
                                     provider(ProviderKind::OpenAICompatible, stub.url() + "/prefix/"));
  const auto r = send(payload, provider(ProviderKind::OpenAICompatible, stub.url() + "/prefix/"), {"k1"}, fast_retry());
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(r.text, "B");
  EXPECT_GE(r.latency_s, 0.0);
  EXPECT_EQ(calls.load(), 3);
  EXPECT_EQ(auth, "Bearer k1");
  EXPECT_EQ(path, "/prefix/v1/chat/completions");
}

TEST(Send, AuthHeadersPerProvider) {
  oracle::StubServer stub;
  std::string anthropic_key, version, gemini_key;
  stub.server().Post("/v1/messages", [&](const httplib::Request& req, httplib::Response& res) {
    anthropic_key = req.get_header_value("x-api-key");
    version = req.get_header_value("anthropic-version");
    res.set_content(R"({"content":[{"type":"text","text":"A"}]})", "application/json");
  });
  stub.server().Post(R"(/v1beta/models/test-model:generateContent)", [&](const httplib::Request& req, httplib::Response& res) {
    gemini_key = req.get_header_value("x-goog-api-key");
    res.set_content(R"({"candidates":[{"content":{"parts":[{"text":"A"}]}}]})", "application/json");
  });
  stub.start();
  Gen g(89);
  const auto plan = local_plan(oracle::random_raster(g, 100, 100));
  for (auto kind : {ProviderKind::AnthropicCompatible, ProviderKind::GeminiCompatible}) {
    const auto cfg = provider(kind, stub.url());
    EXPECT_EQ(send(build_request(plan, "q", cfg), cfg, {"secret"}, fast_retry()).text, "A");
  }
  EXPECT_EQ(anthropic_key, "secret");
  EXPECT_EQ(version, "2023-06-01");
  EXPECT_EQ(gemini_key, "secret");
}

TEST(Send, FailureClassification) {
  oracle::StubServer stub;
  std::atomic<int> storm{0};
  stub.server().Post("/unauth/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("bad key", "text/plain");
  });
  stub.server().Post("/storm/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++storm;
    res.status = 429;
  });
  stub.server().Post("/broken/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("internal trouble", "text/plain");
  });
  stub.server().Post("/teapot/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 418;
  });
  stub.start();
  Gen g(90);
  const auto plan = local_plan(oracle::random_raster(g, 100, 100));
  auto attempt = [&](const std::string& prefix) -> ProviderFailure {
    const auto cfg = provider(ProviderKind::OpenAICompatible, stub.url() + prefix);
    try {
      send(build_request(plan, "q", cfg), cfg, {"k"}, fast_retry(2));
    } catch (const ProviderFailure& e) {
      return e;
    }
    ADD_FAILURE() << prefix;
    return ProviderFailure(ErrorCode::InvalidArgument, 0, "", "");
  };
  auto e = attempt("/unauth");
  EXPECT_EQ(e.code(), ErrorCode::AuthError);
  EXPECT_EQ(e.status(), 401);
  e = attempt("/storm");
  EXPECT_EQ(e.code(), ErrorCode::RateLimited);
  EXPECT_EQ(storm.load(), 3);
  e = attempt("/broken");
  EXPECT_EQ(e.code(), ErrorCode::ProviderError);
  EXPECT_EQ(e.status(), 500);
  EXPECT_EQ(e.body_excerpt(), "internal trouble");
  e = attempt("/teapot");
  EXPECT_EQ(e.code(), ErrorCode::ProviderError);
  EXPECT_EQ(e.status(), 418);
}

TEST(Send, UnreachableAndMissingKey) {
  Gen g(91);
  const auto plan = local_plan(oracle::random_raster(g, 100, 100));
  const auto cfg = provider(ProviderKind::OpenAICompatible, "http://127.0.0.1:" + std::to_string(oracle::closed_port()));
  const auto payload = build_request(plan, "q", cfg);
  EXPECT_EQ(code_of([&] { send(payload, cfg, {""}, fast_retry()); }), ErrorCode::AuthError);
  try {
    send(payload, cfg, {"k"}, fast_retry(1));
    FAIL();
  } catch (const ProviderFailure& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderError);
    EXPECT_EQ(e.status(), 0);
  }
}

TEST(Retry, ExponentialCapped) {
  RetryPolicy r;
  EXPECT_EQ(r.delay_for(0).count(), 500);
  EXPECT_EQ(r.delay_for(1).count(), 1000);
  EXPECT_EQ(r.delay_for(3).count(), 4000);
  EXPECT_EQ(r.delay_for(10).count(), 8000);
}

TEST(Limiter, BurstThenRefill) {
  RateLimiter unlimited(0);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(unlimited.try_acquire());
  RateLimiter limited(60, 2);
  EXPECT_TRUE(limited.try_acquire());
  EXPECT_TRUE(limited.try_acquire());
  EXPECT_FALSE(limited.try_acquire());
  RateLimiter fast(6000);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) fast.acquire();
  EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(45));
}

TEST(Mock, ZoomedGlyphIsLegible) {
  const Raster img(4096, 3072);
  const Box glyph{2002.5, 1502.5, 2047.5, 1547.5};
  const auto zoom = std::make_shared<ComposedImage>(crop_zoom(img, Box{2000, 1500, 2050, 1550}, kCompose));
  EXPECT_NEAR(rendered_target_px({zoom, Detail::High}, glyph, kModel), 460.8, 1e-9);
  ChatRequest req;
  req.text = "Which letter?";
  req.images.push_back({zoom, Detail::High});
  const MockTruth truth{"C", {"A", "B", "C", "D"}, glyph, 32};
  for (int i = 0; i < 20; ++i) {
    req.correlation_id = "c" + std::to_string(i);
    EXPECT_EQ(mock_answer(req, truth, {}).text, "C");
  }
}

TEST(Mock, DownscaledGlyphIsGuessed) {
  const Raster img(4096, 3072);
  const Box glyph{2000, 1500, 2048, 1548};
  const auto raw = std::make_shared<ComposedImage>(baseline_plan(img, Baseline::Raw, kCompose, kModel).images[0]);
  EXPECT_DOUBLE_EQ(rendered_target_px({raw, Detail::High}, glyph, kModel), 12.0);
  const auto resized = std::make_shared<ComposedImage>(baseline_plan(img, Baseline::Resize, kCompose, kModel).images[0]);
  EXPECT_DOUBLE_EQ(rendered_target_px({resized, Detail::High}, glyph, kModel), 6.0);

  const MockTruth truth{"A", {"A", "B", "C", "D"}, glyph, 32};
  std::map<std::string, int> counts;
  ChatRequest req;
  req.text = "Which letter?";
  req.images.push_back({raw, Detail::High});
  for (int i = 0; i < 400; ++i) {
    req.correlation_id = "r" + std::to_string(i);
    const auto a = mock_answer(req, truth, {});
    counts[a.text]++;
    EXPECT_EQ(a.text, mock_answer(req, truth, {}).text);
    EXPECT_EQ(a.usage->prompt_tokens, 765);
    EXPECT_DOUBLE_EQ(a.latency_s, 0.25 + 0.765);
  }
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [letter, n] : counts) EXPECT_NEAR(n, 100, 40) << letter;

  req.images.clear();
  req.correlation_id = "none";
  const auto empty = mock_answer(req, truth, {});
  EXPECT_EQ(empty.text, mock_answer(req, truth, {}).text);
  EXPECT_EQ(empty.usage->prompt_tokens, 0);
}

TEST(Mock, SeedChangesGuesses) {
  const Raster img(4096, 3072);
  const auto raw = std::make_shared<ComposedImage>(baseline_plan(img, Baseline::Raw, kCompose, kModel).images[0]);
  const MockTruth truth{"A", {"A", "B", "C", "D"}, Box{0, 0, 8, 8}, 32};
  ChatRequest req;
  req.text = "q";
  req.images.push_back({raw, Detail::High});
  int differ = 0;
  for (int i = 0; i < 50; ++i) {
    req.correlation_id = std::to_string(i);
    MockConfig a, b;
    b.seed = 99;
    differ += mock_answer(req, truth, a).text != mock_answer(req, truth, b).text;
  }
  EXPECT_GT(differ, 10);
}

TEST(Mock, RequiresGroundTruth) {
  ChatRequest req;
  EXPECT_EQ(code_of([&] { mock_answer(req, MockTruth{"", {"A"}, Box{0, 0, 1, 1}, 32}, {}); }), ErrorCode::MissingGroundTruth);
  EXPECT_EQ(code_of([&] { mock_answer(req, MockTruth{"A", {"A"}, std::nullopt, 32}, {}); }), ErrorCode::MissingGroundTruth);
  ChatClient client(provider(ProviderKind::Mock), {}, {});
  Gen g(92);
  const auto plan = local_plan(oracle::random_raster(g, 100, 100));
  EXPECT_EQ(code_of([&] { client.ask(plan, "q"); }), ErrorCode::MissingGroundTruth);
}

TEST(Client, MockRoundTripKeepsCorrelationId) {
  ChatClient client(provider(ProviderKind::Mock), {}, {});
  Gen g(93);
  const auto img = oracle::random_raster(g, 100, 100);
  const auto plan = local_plan(img);
  const MockTruth truth{"B", {"A", "B"}, Box{10, 10, 50, 40}, 32};
  const auto r = client.ask(plan, "q", truth, "id-7");
  EXPECT_EQ(r.correlation_id, "id-7");
  EXPECT_EQ(r.text, "B");
  EXPECT_GE(r.latency_s, 0.0);
}

TEST(Client, HttpRoundTrip) {
  oracle::StubServer stub;
  stub.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(kOpenAiOk, "application/json");
  });
  stub.start();
  ChatClient client(provider(ProviderKind::OpenAICompatible, stub.url()), {"k"}, fast_retry());
  Gen g(94);
  const auto r = client.ask(local_plan(oracle::random_raster(g, 100, 100)), "q", std::nullopt, "abc");
  EXPECT_EQ(r.text, "B");
  EXPECT_EQ(r.correlation_id, "abc");
  EXPECT_EQ(r.attempts, 1);
}
