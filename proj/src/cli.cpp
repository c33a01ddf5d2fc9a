// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "zoomer/error.hpp"
#include "zoomer/harness.hpp"

namespace zoomer {

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigError: return 1;
    case ErrorCode::EmptyPlan:
    case ErrorCode::PayloadTooLarge:
    case ErrorCode::UnsupportedProvider:
    case ErrorCode::AuthError:
    case ErrorCode::RateLimited:
    case ErrorCode::ProviderError:
    case ErrorCode::MissingGroundTruth: return 3;
    default: return 2;
  }
}

namespace {

struct Settings {
  // pipeline
  std::string strategy = "local";
  std::optional<int> budget;
  std::string detail = "high";
  double iou_threshold = 0.5;
  double conf_threshold = 0.8;
  int max_scale = 3;
  double adaptive_threshold = 0.5;
  std::string mode = "multi_scale";
  bool no_whole_image = false;
  int max_patches = 8;
  bool strict = false;
  int tile_target = 512;
  double margin = 0;
  int per_image_overhead = 0;
  std::string extractor;
  int max_concurrent_detections = 4;
  // detector
  std::string detector_url;
  std::string fixture;
  int detector_timeout_ms = 30000;
  int detector_retries = 2;
  // provider
  std::string provider = "mock";
  std::string model;
  std::string base_url;
  int max_images = 10;
  double rpm = 0;
  bool legend = false;
  int retries = 3;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config;
  // mock ground truth (ask)
  std::string mock_answer;
  std::string mock_options = "A,B,C,D";
  std::string mock_box;
  double legible_px = 32;
  // bench
  std::string dataset;
  std::string methods = "raw,resize,low_detail,zoomer_local,zoomer_adaptive,zoomer_global,zoomer_patches";
  int concurrency = 4;
  int repeats = 1;
  double unit_price = 0;
  std::string report;
  // synth
  int count = 100;
  int width = 4096;
  int height = 3072;
  int glyph_px = 48;
  double base_score = 0.95;
  // process / ask
  std::string image;
  std::string prompt;
};

const std::vector<std::string> kStrategies{"local", "adaptive", "global", "patches"};
const std::vector<std::string> kDetails{"high", "low"};
const std::vector<std::string> kModes{"default", "multi_resolution", "multi_scale"};
const std::vector<std::string> kProviders{"mock",   "openai",           "anthropic",           "gemini",
                                          "openai_compatible", "anthropic_compatible", "gemini_compatible"};

void add_common(CLI::App& sub, Settings& s) {
  sub.add_option("--config", s.config, "Flat key = value file; flags override it");
  sub.add_option("--seed", s.seed, "Seed for every random choice");
  sub.add_option("--out-dir", s.out_dir, "Output directory");
}

void add_pipeline(CLI::App& sub, Settings& s) {
  sub.add_option("--strategy", s.strategy, "local | adaptive | global | patches")->check(CLI::IsMember(kStrategies));
  sub.add_option("--budget", s.budget, "Total image-token budget");
  sub.add_option("--detail", s.detail, "high | low")->check(CLI::IsMember(kDetails));
  sub.add_option("--iou-threshold", s.iou_threshold, "NMS IoU threshold")->check(CLI::Range(0.0, 1.0));
  sub.add_option("--conf-threshold", s.conf_threshold, "Detector confidence threshold")->check(CLI::Range(0.0, 1.0));
  sub.add_option("--max-scale", s.max_scale, "Largest patch grid s")->check(CLI::Range(1, 64));
  sub.add_option("--adaptive-threshold", s.adaptive_threshold, "Coverage below which adaptive adds the global view")
      ->check(CLI::Range(0.0, 1.0));
  sub.add_option("--mode", s.mode, "default | multi_resolution | multi_scale")->check(CLI::IsMember(kModes));
  sub.add_flag("--no-whole-image", s.no_whole_image, "Skip the s=1 detection pass");
  sub.add_option("--max-patches", s.max_patches, "Crop limit for the patches strategy")->check(CLI::Range(0, 1000));
  sub.add_flag("--strict", s.strict, "Fail instead of degrading strategy or detail");
  sub.add_option("--tile-target", s.tile_target, "Long side of composed images")->check(CLI::Range(1, 8192));
  sub.add_option("--margin", s.margin, "Hull margin fraction")->check(CLI::Range(0.0, 1.0));
  sub.add_option("--per-image-overhead", s.per_image_overhead, "Tokens added per image")->check(CLI::Range(0, 100000));
  sub.add_option("--extractor", s.extractor, "Shell command producing key terms, one per line");
  sub.add_option("--max-concurrent-detections", s.max_concurrent_detections, "Parallel detector calls")
      ->check(CLI::Range(1, 256));
  sub.add_option("--detector-url", s.detector_url, "Detector service endpoint");
  sub.add_option("--fixture", s.fixture, "Fixture annotation file (offline detector)");
  sub.add_option("--detector-timeout-ms", s.detector_timeout_ms, "Detector request timeout")->check(CLI::Range(1, 3600000));
  sub.add_option("--detector-retries", s.detector_retries, "Detector connection retries")->check(CLI::Range(0, 100));
}

void add_provider(CLI::App& sub, Settings& s) {
  sub.add_option("--provider", s.provider, "mock | openai | anthropic | gemini")->check(CLI::IsMember(kProviders));
  sub.add_option("--model", s.model, "Provider model name");
  sub.add_option("--base-url", s.base_url, "Provider base URL");
  sub.add_option("--max-images", s.max_images, "Images per request limit")->check(CLI::Range(1, 1000));
  sub.add_option("--rpm", s.rpm, "Requests per minute (0 = unlimited)")->check(CLI::Range(0.0, 1e9));
  sub.add_flag("--legend", s.legend, "Prepend a line naming each image");
  sub.add_option("--retries", s.retries, "Provider retries on 429/5xx")->check(CLI::Range(0, 100));
  sub.add_option("--legible-px", s.legible_px, "Mock provider legibility threshold G")->check(CLI::Range(0.0, 1e6));
}

PipelineOptions pipeline_options(const Settings& s) {
  PipelineOptions p;
  p.emphasis.mode = parse_emphasis_mode(s.mode);
  p.emphasis.s_max = s.max_scale;
  p.emphasis.include_whole_image = !s.no_whole_image;
  p.emphasis.t_conf = s.conf_threshold;
  p.emphasis.max_concurrent_detections = s.max_concurrent_detections;
  p.t_iou = s.iou_threshold;
  p.strategy.strategy = parse_strategy(s.strategy);
  p.strategy.b_total = s.budget;
  p.strategy.t_adaptive = s.adaptive_threshold;
  p.strategy.max_patches = s.max_patches;
  p.strategy.detail = parse_detail(s.detail);
  p.strategy.strict = s.strict;
  p.compose.tile_target = s.tile_target;
  p.compose.margin_fraction = s.margin;
  p.model.per_image_overhead = s.per_image_overhead;
  p.extractor_command = s.extractor;
  return p;
}

std::optional<DetectorBinding> detector_binding(const Settings& s) {
  if (s.fixture.empty() && s.detector_url.empty()) return std::nullopt;
  DetectorBinding b;
  if (!s.fixture.empty()) {
    b.kind = DetectorKind::Fixture;
    b.fixture_path = s.fixture;
  } else {
    b.kind = DetectorKind::Http;
    b.endpoint = s.detector_url;
  }
  b.timeout = std::chrono::milliseconds(s.detector_timeout_ms);
  b.retries = s.detector_retries;
  return b;
}

DetectorBinding require_detector(const Settings& s) {
  auto b = detector_binding(s);
  if (!b) throw Error(ErrorCode::ConfigError, "one of --fixture or --detector-url is required");
  return *b;
}

ChatClient make_client(const Settings& s, const TokenCostModel& model) {
  ProviderConfig cfg;
  cfg.kind = parse_provider(s.provider);
  cfg.base_url = s.base_url;
  cfg.model = s.model;
  cfg.max_images = s.max_images;
  cfg.rpm = s.rpm;
  cfg.legend = s.legend;
  RetryPolicy retry;
  retry.max_retries = s.retries;
  MockConfig mock;
  mock.seed = s.seed;
  mock.model = model;
  return ChatClient(cfg, credentials_from_env(cfg.kind), retry, mock);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

int cmd_process(const Settings& s, std::ostream& out) {
  const auto options = pipeline_options(s);
  const auto detector = make_detector(require_detector(s));
  const Raster image = load_image(s.image);
  const auto result = run_pipeline(image, s.prompt, *detector, options);

  const std::filesystem::path dir(s.out_dir);
  std::filesystem::create_directories(dir);
  const std::string stem = std::filesystem::path(s.image).stem().string();
  std::vector<std::string> files;
  for (std::size_t i = 0; i < result.plan.images.size(); ++i) {
    const std::string name = stem + "." + result.plan.strategy + "." + std::to_string(i) + ".png";
    save_png(result.plan.images[i].pixels, dir / name);
    files.push_back(name);
  }
  const auto plan_path = dir / (stem + ".plan.json");
  std::ofstream(plan_path, std::ios::binary) << plan_document(result.plan, files);
  render_overlay(image, result.regions, dir / (stem + ".overlay.png"));

  out << "terms:";
  for (const auto& t : result.terms.terms) out << " " << t;
  out << "\nregions: " << result.regions.size() << " (" << result.detections.size() << " detections)\n";
  out << "strategy: " << result.plan.strategy << " (requested " << result.plan.requested_strategy << ")\n";
  out << "images: " << result.plan.images.size() << "\n";
  out << "estimated_tokens: " << result.plan.estimated_tokens << "\n";
  out << "dropped_regions: " << result.plan.dropped_regions << "\n";
  out << "plan: " << plan_path.string() << "\n";
  return 0;
}

int cmd_ask(const Settings& s, std::ostream& out) {
  const auto options = pipeline_options(s);
  const auto detector = make_detector(require_detector(s));
  const Raster image = load_image(s.image);
  const auto result = run_pipeline(image, s.prompt, *detector, options);
  auto client = make_client(s, options.model);

  std::optional<MockTruth> truth;
  if (client.config().kind == ProviderKind::Mock) {
    MockTruth t;
    t.answer = s.mock_answer;
    t.options = split_list(s.mock_options);
    t.legible_px = s.legible_px;
    if (!s.mock_box.empty()) {
      const auto parts = split_list(s.mock_box);
      if (parts.size() != 4) throw Error(ErrorCode::ConfigError, "--mock-box needs x0,y0,x1,y1");
      try {
        t.target = Box{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]), std::stod(parts[3])};
      } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "--mock-box needs four numbers");
      }
    }
    truth = t;
  }
  const auto response = client.ask(result.plan, s.prompt, truth, "ask");
  out << "answer: " << response.text << "\n";
  out << "strategy: " << result.plan.strategy << "\n";
  out << "images: " << result.plan.images.size() << "\n";
  out << "estimated_prompt_tokens: " << result.plan.estimated_tokens << "\n";
  out << "reported_prompt_tokens: "
      << (response.usage ? std::to_string(response.usage->prompt_tokens) : std::string("n/a")) << "\n";
  out << "latency_s: " << fixed(response.latency_s, 3) << "\n";
  out << "attempts: " << response.attempts << "\n";
  return 0;
}

int cmd_bench(const Settings& s, std::ostream& out, std::ostream& err) {
  BenchOptions options;
  for (const auto& name : split_list(s.methods)) {
    try {
      options.methods.push_back(parse_method(name));
    } catch (const Error& e) {
      err << "usage: " << e.what() << "\n";
      return 1;
    }
  }
  if (options.methods.empty()) {
    err << "usage: --methods is empty\n";
    return 1;
  }
  options.concurrency = s.concurrency;
  options.repeats = s.repeats;
  options.unit_price_per_1k = s.unit_price;
  options.pipeline = pipeline_options(s);
  options.detector = detector_binding(s);
  options.default_legible_px = s.legible_px;

  const auto records = load_dataset(s.dataset);
  auto client = make_client(s, options.pipeline.model);
  const auto report = run_bench(records, options, client, s.dataset);

  const std::filesystem::path report_path =
      s.report.empty() ? std::filesystem::path(s.out_dir) / "report.json" : std::filesystem::path(s.report);
  if (report_path.has_parent_path()) std::filesystem::create_directories(report_path.parent_path());
  std::ofstream file(report_path, std::ios::binary | std::ios::trunc);
  file << report_document(report);
  if (!file) throw Error(ErrorCode::IoError, "cannot write " + report_path.string());
  render_table(report, out);
  out << "report: " << report_path.string() << "\n";
  if (report.failed()) {
    err << "error: " << report.failed_records << " of " << report.records << " records failed\n";
    return 2;
  }
  return 0;
}

int cmd_synth(const Settings& s, std::ostream& out, std::ostream& err) {
  SynthOptions o;
  o.count = s.count;
  o.width = s.width;
  o.height = s.height;
  o.glyph_px = s.glyph_px;
  o.legible_px = s.legible_px;
  o.base_score = s.base_score;
  o.seed = s.seed;
  const auto path = synthesize(o, s.out_dir);
  if (o.count == 0) err << "warning: count is 0, wrote an empty dataset\n";
  out << "dataset: " << path.string() << "\n";
  return 0;
}

std::string normalize_key(std::string key) {
  static const std::map<std::string, std::string> aliases{{"provider.name", "provider"},
                                                          {"provider.base_url", "base-url"},
                                                          {"provider.model", "model"},
                                                          {"provider.max_images", "max-images"},
                                                          {"provider.rpm", "rpm"}};
  if (auto it = aliases.find(key); it != aliases.end()) return it->second;
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// Turns a `key = value` file into `--key=value` arguments for `sub`. Keys that
// belong to another subcommand are skipped; unknown keys are an error.
std::vector<std::string> config_arguments(const std::filesystem::path& path, const CLI::App& app,
                                          const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = normalize_key(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key == "config") continue;
    if (sub.get_option_no_throw("--" + key)) {
      args.push_back("--" + key + "=" + value);
      continue;
    }
    bool elsewhere = false;
    for (const auto* other : app.get_subcommands([](const CLI::App*) { return true; })) {
      elsewhere = elsewhere || other->get_option_no_throw("--" + key) != nullptr;
    }
    if (!elsewhere) {
      throw Error(ErrorCode::ConfigError, path.string() + ":" + std::to_string(lineno) + ": unknown key " + key);
    }
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Settings s;
  CLI::App app("Detect, compose and budget image prompts for multimodal models", "zoomer");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  auto* process = app.add_subcommand("process", "Write the composed prompt images, plan and overlay");
  process->add_option("image", s.image, "Input image")->required();
  process->add_option("prompt", s.prompt, "Question text")->required();
  add_common(*process, s);
  add_pipeline(*process, s);

  auto* ask = app.add_subcommand("ask", "Run the pipeline and send the plan to a provider");
  ask->add_option("image", s.image, "Input image")->required();
  ask->add_option("prompt", s.prompt, "Question text")->required();
  add_common(*ask, s);
  add_pipeline(*ask, s);
  add_provider(*ask, s);
  ask->add_option("--mock-answer", s.mock_answer, "Mock provider: correct option letter");
  ask->add_option("--mock-options", s.mock_options, "Mock provider: comma-separated option letters");
  ask->add_option("--mock-box", s.mock_box, "Mock provider: x0,y0,x1,y1 of the answer in the image");

  auto* bench = app.add_subcommand("bench", "Evaluate methods over a dataset");
  bench->add_option("dataset", s.dataset, "Line-delimited dataset file")->required();
  add_common(*bench, s);
  add_pipeline(*bench, s);
  add_provider(*bench, s);
  bench->add_option("--methods", s.methods, "Comma-separated methods");
  bench->add_option("--concurrency", s.concurrency, "Records in flight")->check(CLI::Range(1, 1024));
  bench->add_option("--repeats", s.repeats, "Repeats per trial")->check(CLI::Range(1, 1000));
  bench->add_option("--unit-price", s.unit_price, "Price per 1k prompt tokens")->check(CLI::Range(0.0, 1e9));
  bench->add_option("--report", s.report, "Report path (default <out-dir>/report.json)");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic letter benchmark");
  add_common(*synth, s);
  synth->add_option("--count", s.count, "Number of images")->check(CLI::Range(0, 1000000));
  synth->add_option("--width", s.width, "Image width")->check(CLI::Range(1, 65535));
  synth->add_option("--height", s.height, "Image height")->check(CLI::Range(1, 65535));
  synth->add_option("--glyph-px", s.glyph_px, "Glyph side in pixels")->check(CLI::Range(1, 65535));
  synth->add_option("--legible-px", s.legible_px, "Legibility threshold G recorded for the mock")
      ->check(CLI::Range(0.0, 1e6));
  synth->add_option("--base-score", s.base_score, "Fixture detector score")->check(CLI::Range(0.0, 1.0));

  for (auto* sub : {process, ask, bench, synth}) {
    for (auto* opt : sub->get_options()) {
      if (opt->get_items_expected_max() <= 1) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  try {
    std::vector<std::string> argv = args;
    // The config file's arguments go right after the subcommand name so that
    // command-line flags, which come later, win.
    const auto sub_pos = std::find_if(argv.begin(), argv.end(), [](const std::string& a) { return !a.starts_with("-"); });
    if (sub_pos != argv.end()) {
      const CLI::App* sub = app.get_subcommand_no_throw(*sub_pos);
      std::string config_path;
      for (auto it = sub_pos; it != argv.end(); ++it) {
        if (*it == "--config" && it + 1 != argv.end()) config_path = *(it + 1);
        if (it->starts_with("--config=")) config_path = it->substr(9);
      }
      if (sub && !config_path.empty()) {
        const auto extra = config_arguments(config_path, app, *sub);
        argv.insert(sub_pos + 1, extra.begin(), extra.end());
      }
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  }

  try {
    if (*process) return cmd_process(s, out);
    if (*ask) return cmd_ask(s, out);
    if (*bench) return cmd_bench(s, out, err);
    return cmd_synth(s, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace zoomer
