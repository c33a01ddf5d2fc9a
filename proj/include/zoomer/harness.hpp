// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "zoomer/budget.hpp"
#include "zoomer/composer.hpp"
#include "zoomer/detector.hpp"
#include "zoomer/emphasizer.hpp"
#include "zoomer/error.hpp"
#include "zoomer/keyterms.hpp"
#include "zoomer/mllm.hpp"

namespace zoomer {

struct PipelineOptions {
  EmphasisConfig emphasis;
  double t_iou = 0.5;
  StrategyConfig strategy;
  ComposeConfig compose;
  TokenCostModel model;
  std::string extractor_command;  // empty: built-in extractor
};

struct PipelineResult {
  KeyTermSet terms;
  std::vector<ScoredBox> detections;  // before NMS
  std::vector<ScoredBox> regions;     // after NMS
  StrategyPlan plan;
};

// keyterms -> emphasis -> NMS -> planner.
PipelineResult run_pipeline(const Raster& image, const std::string& prompt, const Detector& detector,
                            const PipelineOptions& options);

struct BenchOption {
  std::string letter;
  std::string text;
};

struct BenchRecord {
  std::filesystem::path image;
  std::string question;
  std::vector<BenchOption> options;
  std::string answer;
  std::optional<std::filesystem::path> fixture;
  std::optional<Box> target;          // mock ground truth
  std::optional<double> legible_px;   // mock ground truth
};

// Line-delimited JSON; relative paths resolve against the dataset's directory.
std::vector<BenchRecord> load_dataset(const std::filesystem::path& path);

// The question followed by one "X. text" line per option.
std::string format_prompt(const BenchRecord& record);

// First standalone option letter in `response` (case-insensitive), or "".
std::string extract_choice(const std::string& response, const std::vector<BenchOption>& options);

enum class Method { Raw, Resize, LowDetail, ZoomerLocal, ZoomerAdaptive, ZoomerGlobal, ZoomerPatches };

std::string_view to_string(Method method) noexcept;
// Throws InvalidArgument for unknown names.
Method parse_method(std::string_view text);

struct BenchOptions {
  std::vector<Method> methods;
  int concurrency = 4;
  int repeats = 1;
  double unit_price_per_1k = 0;
  PipelineOptions pipeline;
  // Used for records without their own fixture file.
  std::optional<DetectorBinding> detector;
  double default_legible_px = 32;
};

struct RepeatStats {
  double accuracy = 0;
  double mean_estimated_tokens = 0;
  double mean_latency_s = 0;
};

struct MethodRow {
  std::string method;
  int trials = 0;
  int failures = 0;
  double accuracy = 0;
  double mean_estimated_tokens = 0;
  std::optional<double> mean_reported_tokens;
  double mean_latency_s = 0;
  double cost = 0;  // mean estimated tokens x unit price per 1k
  std::vector<RepeatStats> per_repeat;
};

struct Trace {
  int record = 0;
  std::string method;
  int repeat = 0;
  std::string correlation_id;
  std::string expected;
  std::string chosen;
  std::string response;
  bool correct = false;
  int estimated_tokens = 0;
  std::optional<int> reported_tokens;
  double latency_s = 0;
  int images = 0;
  std::string strategy;
  bool fallback = false;
  std::string error;  // error name and message when the trial failed
};

struct BenchReport {
  std::string dataset;
  std::string provider;
  std::string model;
  double unit_price_per_1k = 0;
  int repeats = 1;
  int records = 0;
  int failed_records = 0;
  std::vector<MethodRow> rows;
  std::vector<Trace> traces;

  // More than 10% of the records had a failed trial.
  bool failed() const noexcept;
};

// Runs every (record, method, repeat) trial. Per-trial failures are recorded
// in the traces. Throws EmptyDataset.
BenchReport run_bench(const std::vector<BenchRecord>& records, const BenchOptions& options,
                      ChatClient& client, const std::string& dataset_name = {});

std::string report_document(const BenchReport& report);
// Aligned text table, one row per method.
void render_table(const BenchReport& report, std::ostream& out);

struct SynthOptions {
  int count = 100;
  int width = 4096;
  int height = 3072;
  int glyph_px = 48;
  double legible_px = 32;
  double base_score = 0.95;
  std::uint64_t seed = 0;
};

// Writes images/, fixtures/ and dataset.jsonl under `out_dir`; returns the
// dataset path. Throws InvalidArgument when the glyph does not fit.
std::filesystem::path synthesize(const SynthOptions& options, const std::filesystem::path& out_dir);

// One synthetic image plus its glyph box; exposed for tests.
struct SynthSample {
  Raster image;
  Box glyph;
  std::string letter;
};
SynthSample synth_sample(const SynthOptions& options, int index);

// 5x5 bitmap for A-D; row-major, true = ink.
const std::array<std::array<bool, 5>, 5>& glyph_bitmap(char letter);

// Entry point for the `zoomer` executable. Returns the process exit code:
// 0 ok, 1 usage, 2 pipeline error, 3 provider error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Exit code for an error caught at the top level.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace zoomer
