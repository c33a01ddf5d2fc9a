// SPDX-License-Identifier: Apache-2.0

#include "zoomer/keyterms.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <csignal>
#include <optional>
#include <set>
#include <unordered_set>

#include "zoomer/error.hpp"

namespace zoomer {

// Generated at configure time from data/stopwords_en.txt.
extern const char* const kBundledStopwordText;

namespace {

constexpr std::array<std::string_view, 14> kScaffoldWords = {
    "what", "which", "where", "how",     "many",      "much",  "kind",
    "type", "color", "image", "picture", "following", "shown", "photo"};

constexpr std::array<std::string_view, 18> kImperativeVerbs = {
    "describe", "identify", "count", "find",   "name",   "tell",   "list",   "select", "choose",
    "determine", "explain", "locate", "read",  "answer", "give",   "state",  "look",   "show"};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Non-ASCII bytes count as word characters so UTF-8 words stay whole.
bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0;
}

struct Marker {
  std::size_t begin;
  char letter;
};

// Matches "A." / "A)" / "(A)" at pos, preceded by start-of-text or whitespace
// and followed by whitespace or end-of-text.
std::optional<Marker> marker_at(std::string_view text, std::size_t pos) {
  if (pos > 0 && !is_space(text[pos - 1])) return std::nullopt;
  std::size_t i = pos;
  bool paren = false;
  if (text[i] == '(') {
    paren = true;
    ++i;
  }
  if (i >= text.size() || text[i] < 'A' || text[i] > 'E') return std::nullopt;
  const char letter = text[i++];
  if (i >= text.size()) return std::nullopt;
  if (paren) {
    if (text[i] != ')') return std::nullopt;
  } else if (text[i] != '.' && text[i] != ')') {
    return std::nullopt;
  }
  ++i;
  if (i < text.size() && !is_space(text[i])) return std::nullopt;
  return Marker{pos, letter};
}

// Option markers must start at A and continue B, C, ... in order.
std::vector<Marker> find_option_markers(std::string_view text) {
  std::vector<Marker> markers;
  char expected = 'A';
  for (std::size_t pos = 0; pos < text.size() && expected <= 'E'; ++pos) {
    auto m = marker_at(text, pos);
    if (m && m->letter == expected) {
      markers.push_back(*m);
      ++expected;
    }
  }
  return markers;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      if (auto t = trim(current); !t.empty()) out.push_back(t);
      current.clear();
      continue;
    }
    current.push_back(c);
    const bool terminal = c == '?' || c == '!' || c == '.';
    if (terminal && (i + 1 == text.size() || is_space(text[i + 1]))) {
      if (auto t = trim(current); !t.empty()) out.push_back(t);
      current.clear();
    }
  }
  if (auto t = trim(current); !t.empty()) out.push_back(t);
  return out;
}

bool is_imperative(std::string_view sentence) {
  std::size_t end = 0;
  while (end < sentence.size() && is_word_char(sentence[end])) ++end;
  const auto first = lower(sentence.substr(0, end));
  return std::find(kImperativeVerbs.begin(), kImperativeVerbs.end(), first) != kImperativeVerbs.end();
}

const std::unordered_set<std::string>& stopword_set() {
  static const std::unordered_set<std::string> set(bundled_stopwords().begin(),
                                                   bundled_stopwords().end());
  return set;
}

std::vector<std::string> normalize_terms(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : raw) {
    auto t = lower(trim(r));
    if (t.empty() || is_stopword(t)) continue;
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

const std::vector<std::string>& bundled_stopwords() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    std::string_view text(kBundledStopwordText);
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      auto line = trim(text.substr(pos, nl - pos));
      if (!line.empty() && line[0] != '#') w.push_back(std::move(line));
      pos = nl + 1;
    }
    return w;
  }();
  return words;
}

bool is_stopword(std::string_view word) { return stopword_set().count(std::string(word)) > 0; }

bool is_scaffold_word(std::string_view word) {
  return std::find(kScaffoldWords.begin(), kScaffoldWords.end(), word) != kScaffoldWords.end();
}

PromptSections split_prompt_sections(std::string_view prompt) {
  const std::string text = trim(prompt);
  if (text.empty()) throw Error(ErrorCode::EmptyPrompt, "prompt is empty");

  PromptSections sections;
  const auto markers = find_option_markers(text);

  std::string remainder;
  if (markers.empty()) {
    remainder = text;
  } else {
    remainder = text.substr(0, markers.front().begin);
    for (std::size_t i = 0; i < markers.size(); ++i) {
      const std::size_t begin = markers[i].begin;
      std::size_t end;
      if (i + 1 < markers.size()) {
        end = markers[i + 1].begin;
      } else {
        end = text.find('\n', begin);
        if (end == std::string::npos) end = text.size();
      }
      sections.options.push_back(trim(std::string_view(text).substr(begin, end - begin)));
      if (i + 1 == markers.size() && end < text.size()) {
        remainder += "\n";
        remainder += text.substr(end);
      }
    }
  }

  auto sentences = split_sentences(remainder);
  std::optional<std::size_t> chosen;
  for (std::size_t i = 0; i < sentences.size() && !chosen; ++i) {
    if (sentences[i].back() == '?') chosen = i;
  }
  for (std::size_t i = 0; i < sentences.size() && !chosen; ++i) {
    if (is_imperative(sentences[i])) chosen = i;
  }
  if (!chosen && !sentences.empty()) chosen = 0;

  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (chosen && i == *chosen) {
      sections.question = sentences[i];
    } else {
      if (!sections.other.empty()) sections.other += ' ';
      sections.other += sentences[i];
    }
  }
  return sections;
}

std::vector<std::string> BuiltinExtractor::extract(std::string_view text) const {
  std::vector<std::string> terms;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !is_stopword(current) && !is_scaffold_word(current)) {
      terms.push_back(current);
    }
    current.clear();
  };
  for (char c : text) {
    if (is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  return normalize_terms(terms);
}

std::vector<std::string> SubprocessExtractor::extract(std::string_view text) const {
  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0) throw Error(ErrorCode::ExtractorFailed, "pipe failed");
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    throw Error(ErrorCode::ExtractorFailed, "pipe failed");
  }
  const pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::ExtractorFailed, "fork failed");
  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);

  // The child may exit without draining stdin.
  auto old_handler = std::signal(SIGPIPE, SIG_IGN);
  std::size_t written = 0;
  while (written < text.size()) {
    const auto n = write(to_child[1], text.data() + written, text.size() - written);
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  close(to_child[1]);
  std::signal(SIGPIPE, old_handler);

  std::string output;
  std::array<char, 4096> buf;
  for (;;) {
    const auto n = read(from_child[0], buf.data(), buf.size());
    if (n <= 0) break;
    output.append(buf.data(), static_cast<std::size_t>(n));
  }
  close(from_child[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(ErrorCode::ExtractorFailed, "extractor command failed: " + command_);
  }

  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < output.size()) {
    auto nl = output.find('\n', pos);
    if (nl == std::string::npos) nl = output.size();
    lines.push_back(output.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

KeyTermSet extract_key_terms(std::string_view prompt, const Extractor& extractor) {
  const auto sections = split_prompt_sections(prompt);
  KeyTermSet set;
  std::string span;
  if (!sections.options.empty()) {
    set.source_span = SourceSpan::Question;
    span = sections.question;
  } else {
    set.source_span = SourceSpan::WholePrompt;
    span = trim(prompt);
  }
  set.terms = normalize_terms(extractor.extract(span));
  if (set.terms.empty()) throw Error(ErrorCode::NoTermsFound, "no key terms in prompt");
  return set;
}

KeyTermSet extract_key_terms(std::string_view prompt) {
  static const BuiltinExtractor builtin;
  return extract_key_terms(prompt, builtin);
}

}  // namespace zoomer
