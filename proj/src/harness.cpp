// SPDX-License-Identifier: Apache-2.0

#include "zoomer/harness.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <memory>

#include "zoomer/error.hpp"
#include "zoomer/parallel.hpp"

namespace zoomer {

using nlohmann::json;

namespace {

struct Regions {
  KeyTermSet terms;
  std::vector<ScoredBox> detections;
  std::vector<ScoredBox> regions;
};

Regions find_regions(const Raster& image, const std::string& prompt, const Detector& detector,
                     const PipelineOptions& options) {
  Regions out;
  try {
    if (options.extractor_command.empty()) {
      out.terms = extract_key_terms(prompt);
    } else {
      out.terms = extract_key_terms(prompt, SubprocessExtractor(options.extractor_command));
    }
  } catch (const Error& e) {
    // No terms means no regions; the planner falls back to the global view.
    if (e.code() != ErrorCode::NoTermsFound) throw;
    return out;
  }
  out.detections = emphasize(image, out.terms, options.emphasis, detector);
  out.regions = nms_filter(out.detections, options.t_iou);
  return out;
}

}  // namespace

PipelineResult run_pipeline(const Raster& image, const std::string& prompt, const Detector& detector,
                            const PipelineOptions& options) {
  auto found = find_regions(image, prompt, detector, options);
  PipelineResult out;
  out.plan = plan_prompt(image, found.regions, options.strategy, options.compose, options.model);
  out.terms = std::move(found.terms);
  out.detections = std::move(found.detections);
  out.regions = std::move(found.regions);
  return out;
}

std::vector<BenchRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read dataset " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  std::vector<BenchRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = json::parse(line);
      BenchRecord r;
      r.image = resolve(j.at("image").get<std::string>());
      r.question = j.at("question").get<std::string>();
      for (const auto& o : j.at("options")) {
        r.options.push_back({o.at("letter").get<std::string>(), o.value("text", std::string())});
      }
      r.answer = j.at("answer").get<std::string>();
      if (j.contains("fixture") && !j["fixture"].is_null()) r.fixture = resolve(j["fixture"].get<std::string>());
      if (j.contains("mock")) {
        const auto& m = j["mock"];
        if (m.contains("box")) {
          const auto& b = m["box"];
          r.target = Box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                         b.at(3).get<double>()};
        }
        if (m.contains("legible_px")) r.legible_px = m["legible_px"].get<double>();
      }
      bool known = false;
      for (const auto& o : r.options) known = known || o.letter == r.answer;
      if (!known) throw Error(ErrorCode::InvalidArgument, "answer is not one of the option letters");
      records.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::InvalidArgument, where + ": " + e.what());
    }
  }
  return records;
}

std::string format_prompt(const BenchRecord& record) {
  std::string out = record.question;
  for (const auto& o : record.options) out += "\n" + o.letter + ". " + o.text;
  return out;
}

std::string extract_choice(const std::string& response, const std::vector<BenchOption>& options) {
  auto word = [](unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; };
  for (std::size_t i = 0; i < response.size(); ++i) {
    const auto c = static_cast<unsigned char>(response[i]);
    if (!std::isalpha(c)) continue;
    if (i > 0 && word(static_cast<unsigned char>(response[i - 1]))) continue;
    if (i + 1 < response.size() && word(static_cast<unsigned char>(response[i + 1]))) continue;
    const std::string letter(1, static_cast<char>(std::toupper(c)));
    for (const auto& o : options) {
      if (o.letter.size() == 1 && std::toupper(static_cast<unsigned char>(o.letter[0])) == letter[0]) {
        return o.letter;
      }
    }
  }
  return {};
}

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::Raw: return "raw";
    case Method::Resize: return "resize";
    case Method::LowDetail: return "low_detail";
    case Method::ZoomerLocal: return "zoomer_local";
    case Method::ZoomerAdaptive: return "zoomer_adaptive";
    case Method::ZoomerGlobal: return "zoomer_global";
    case Method::ZoomerPatches: return "zoomer_patches";
  }
  return "raw";
}

Method parse_method(std::string_view text) {
  for (auto m : {Method::Raw, Method::Resize, Method::LowDetail, Method::ZoomerLocal, Method::ZoomerAdaptive,
                 Method::ZoomerGlobal, Method::ZoomerPatches}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method: " + std::string(text));
}

bool BenchReport::failed() const noexcept { return records > 0 && failed_records * 10 > records; }

namespace {

bool is_zoomer(Method m) {
  return m == Method::ZoomerLocal || m == Method::ZoomerAdaptive || m == Method::ZoomerGlobal ||
         m == Method::ZoomerPatches;
}

Strategy strategy_of(Method m) {
  switch (m) {
    case Method::ZoomerAdaptive: return Strategy::Adaptive;
    case Method::ZoomerGlobal: return Strategy::Global;
    case Method::ZoomerPatches: return Strategy::Patches;
    default: return Strategy::Local;
  }
}

std::string describe(const std::exception& e) { return e.what(); }

// Runs every method and repeat for one record; traces come back in
// (method, repeat) order.
std::vector<Trace> run_record(int index, const BenchRecord& record, const BenchOptions& options,
                              ChatClient& client) {
  std::vector<Trace> traces;
  for (auto m : options.methods) {
    for (int rep = 0; rep < options.repeats; ++rep) {
      Trace t;
      t.record = index;
      t.method = std::string(to_string(m));
      t.repeat = rep;
      t.correlation_id = "r" + std::to_string(index) + "." + t.method + "." + std::to_string(rep);
      t.expected = record.answer;
      traces.push_back(std::move(t));
    }
  }
  Raster image;
  try {
    image = load_image(record.image);
  } catch (const std::exception& e) {
    for (auto& t : traces) t.error = describe(e);
    return traces;
  }

  const std::string prompt = format_prompt(record);
  std::optional<Regions> regions;
  std::string region_error;
  bool needs_regions = false;
  for (auto m : options.methods) needs_regions = needs_regions || is_zoomer(m);
  if (needs_regions) {
    try {
      std::unique_ptr<Detector> detector;
      if (record.fixture) {
        detector = std::make_unique<FixtureDetector>(load_fixture(*record.fixture));
      } else if (options.detector) {
        detector = make_detector(*options.detector);
      } else {
        throw Error(ErrorCode::ConfigError, "no fixture or detector endpoint for record");
      }
      regions = find_regions(image, prompt, *detector, options.pipeline);
    } catch (const std::exception& e) {
      region_error = describe(e);
    }
  }

  MockTruth truth;
  truth.answer = record.answer;
  for (const auto& o : record.options) truth.options.push_back(o.letter);
  truth.target = record.target;
  truth.legible_px = record.legible_px.value_or(options.default_legible_px);
  std::optional<MockTruth> mock;
  if (client.config().kind == ProviderKind::Mock) mock = truth;

  std::size_t k = 0;
  for (auto m : options.methods) {
    std::optional<StrategyPlan> plan;
    std::string plan_error;
    try {
      switch (m) {
        case Method::Raw: plan = baseline_plan(image, Baseline::Raw, options.pipeline.compose, options.pipeline.model); break;
        case Method::Resize:
          plan = baseline_plan(image, Baseline::Resize, options.pipeline.compose, options.pipeline.model);
          break;
        case Method::LowDetail:
          plan = baseline_plan(image, Baseline::LowDetail, options.pipeline.compose, options.pipeline.model);
          break;
        default: {
          if (!regions) throw Error(ErrorCode::NoRegions, region_error);
          auto cfg = options.pipeline.strategy;
          cfg.strategy = strategy_of(m);
          plan = plan_prompt(image, regions->regions, cfg, options.pipeline.compose, options.pipeline.model);
        }
      }
    } catch (const std::exception& e) {
      plan_error = describe(e);
    }

    for (int rep = 0; rep < options.repeats; ++rep, ++k) {
      auto& t = traces[k];
      if (!plan) {
        t.error = plan_error;
        continue;
      }
      t.estimated_tokens = plan->estimated_tokens;
      t.images = int(plan->images.size());
      t.strategy = plan->strategy;
      t.fallback = plan->fallback;
      try {
        const auto response = client.ask(*plan, prompt, mock, t.correlation_id);
        t.response = response.text;
        t.latency_s = response.latency_s;
        if (response.usage) t.reported_tokens = response.usage->prompt_tokens;
        t.chosen = extract_choice(response.text, record.options);
        t.correct = t.chosen == record.answer;
      } catch (const std::exception& e) {
        t.error = describe(e);
      }
    }
  }
  return traces;
}

}  // namespace

BenchReport run_bench(const std::vector<BenchRecord>& records, const BenchOptions& options,
                      ChatClient& client, const std::string& dataset_name) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no records");
  if (options.methods.empty()) throw Error(ErrorCode::InvalidArgument, "no methods requested");
  if (options.repeats < 1) throw Error(ErrorCode::InvalidArgument, "repeats must be >= 1");

  std::vector<std::vector<Trace>> slots(records.size());
  parallel_for(records.size(), options.concurrency, [&](std::size_t i) {
    slots[i] = run_record(int(i), records[i], options, client);
  });

  BenchReport report;
  report.dataset = dataset_name;
  report.provider = std::string(to_string(client.config().kind));
  report.model = client.config().model;
  report.unit_price_per_1k = options.unit_price_per_1k;
  report.repeats = options.repeats;
  report.records = int(records.size());
  for (auto& slot : slots) {
    bool any_failed = false;
    for (auto& t : slot) {
      any_failed = any_failed || !t.error.empty();
      report.traces.push_back(std::move(t));
    }
    if (any_failed) ++report.failed_records;
  }

  for (auto m : options.methods) {
    const std::string name(to_string(m));
    MethodRow row;
    row.method = name;
    row.per_repeat.resize(std::size_t(options.repeats));
    std::vector<int> rep_trials(options.repeats, 0), rep_correct(options.repeats, 0), rep_ok(options.repeats, 0);
    std::vector<double> rep_tokens(options.repeats, 0), rep_latency(options.repeats, 0);
    int ok = 0, correct = 0, reported = 0;
    double tokens = 0, latency = 0, reported_sum = 0;
    for (const auto& t : report.traces) {
      if (t.method != name) continue;
      ++row.trials;
      ++rep_trials[t.repeat];
      if (!t.error.empty()) {
        ++row.failures;
        continue;
      }
      ++ok;
      ++rep_ok[t.repeat];
      correct += t.correct;
      rep_correct[t.repeat] += t.correct;
      tokens += t.estimated_tokens;
      rep_tokens[t.repeat] += t.estimated_tokens;
      latency += t.latency_s;
      rep_latency[t.repeat] += t.latency_s;
      if (t.reported_tokens) {
        ++reported;
        reported_sum += *t.reported_tokens;
      }
    }
    row.accuracy = row.trials ? double(correct) / row.trials : 0.0;
    row.mean_estimated_tokens = ok ? tokens / ok : 0.0;
    row.mean_latency_s = ok ? latency / ok : 0.0;
    if (reported) row.mean_reported_tokens = reported_sum / reported;
    row.cost = row.mean_estimated_tokens * options.unit_price_per_1k / 1000.0;
    for (int r = 0; r < options.repeats; ++r) {
      auto& s = row.per_repeat[std::size_t(r)];
      s.accuracy = rep_trials[r] ? double(rep_correct[r]) / rep_trials[r] : 0.0;
      s.mean_estimated_tokens = rep_ok[r] ? rep_tokens[r] / rep_ok[r] : 0.0;
      s.mean_latency_s = rep_ok[r] ? rep_latency[r] / rep_ok[r] : 0.0;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string report_document(const BenchReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json per_repeat = json::array();
    for (const auto& s : r.per_repeat) {
      per_repeat.push_back({{"accuracy", s.accuracy},
                            {"mean_estimated_tokens", s.mean_estimated_tokens},
                            {"mean_latency_s", s.mean_latency_s}});
    }
    rows.push_back({{"method", r.method},
                    {"trials", r.trials},
                    {"failures", r.failures},
                    {"accuracy", r.accuracy},
                    {"mean_estimated_tokens", r.mean_estimated_tokens},
                    {"mean_reported_tokens", r.mean_reported_tokens ? json(*r.mean_reported_tokens) : json(nullptr)},
                    {"mean_latency_s", r.mean_latency_s},
                    {"cost", r.cost},
                    {"per_repeat", per_repeat}});
  }
  json traces = json::array();
  for (const auto& t : report.traces) {
    json entry = {{"record", t.record},
                  {"method", t.method},
                  {"repeat", t.repeat},
                  {"correlation_id", t.correlation_id},
                  {"expected", t.expected},
                  {"chosen", t.chosen},
                  {"response", t.response},
                  {"correct", t.correct},
                  {"estimated_tokens", t.estimated_tokens},
                  {"reported_tokens", t.reported_tokens ? json(*t.reported_tokens) : json(nullptr)},
                  {"latency_s", t.latency_s},
                  {"images", t.images},
                  {"strategy", t.strategy},
                  {"fallback", t.fallback}};
    if (!t.error.empty()) entry["error"] = t.error;
    traces.push_back(std::move(entry));
  }
  json doc = {{"dataset", report.dataset},
              {"provider", report.provider},
              {"model", report.model},
              {"unit_price_per_1k", report.unit_price_per_1k},
              {"repeats", report.repeats},
              {"records", report.records},
              {"failed_records", report.failed_records},
              {"rows", rows},
              {"traces", traces}};
  return doc.dump(2) + "\n";
}

void render_table(const BenchReport& report, std::ostream& out) {
  const std::vector<std::string> header{"method", "accuracy", "tokens", "latency_s", "cost", "trials", "failures"};
  std::vector<std::vector<std::string>> cells{header};
  char buf[64];
  for (const auto& r : report.rows) {
    std::vector<std::string> row{r.method};
    std::snprintf(buf, sizeof buf, "%.4f", r.accuracy);
    row.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "%.1f", r.mean_estimated_tokens);
    row.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "%.3f", r.mean_latency_s);
    row.emplace_back(buf);
    std::snprintf(buf, sizeof buf, "%.6f", r.cost);
    row.emplace_back(buf);
    row.push_back(std::to_string(r.trials));
    row.push_back(std::to_string(r.failures));
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto pad = std::string(widths[c] - row[c].size(), ' ');
      if (c == 0) {
        out << row[c] << pad;
      } else {
        out << "  " << pad << row[c];
      }
    }
    out << "\n";
  }
}

}  // namespace zoomer
