// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace zoomer {

struct PromptSections {
  std::string question;
  std::vector<std::string> options;  // "A. red", "B. blue", ...
  std::string other;
};

// Throws EmptyPrompt when the trimmed prompt is empty.
PromptSections split_prompt_sections(std::string_view prompt);

enum class SourceSpan { Question, WholePrompt };

struct KeyTermSet {
  std::vector<std::string> terms;
  SourceSpan source_span = SourceSpan::WholePrompt;
};

// Maps a span of prompt text to candidate terms (order matters).
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual std::vector<std::string> extract(std::string_view text) const = 0;
};

// lowercase -> split on non-alphanumeric runs -> drop stopwords and
// question-scaffold words.
class BuiltinExtractor final : public Extractor {
 public:
  std::vector<std::string> extract(std::string_view text) const override;
};

// Runs `command` through /bin/sh, writes the text to its stdin and reads one
// term per line from its stdout. A nonzero exit raises ExtractorFailed.
class SubprocessExtractor final : public Extractor {
 public:
  explicit SubprocessExtractor(std::string command) : command_(std::move(command)) {}
  std::vector<std::string> extract(std::string_view text) const override;

 private:
  std::string command_;
};

const std::vector<std::string>& bundled_stopwords();
bool is_stopword(std::string_view word);
bool is_scaffold_word(std::string_view word);

// Terms come from the question section only when the prompt carries options,
// otherwise from the whole prompt. Output is lowercased, stopword-free and
// deduplicated in order of first appearance. Throws EmptyPrompt/NoTermsFound.
KeyTermSet extract_key_terms(std::string_view prompt, const Extractor& extractor);
KeyTermSet extract_key_terms(std::string_view prompt);

}  // namespace zoomer
