// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zoomer {

enum class ErrorCode {
  InvalidArgument,
  InvalidBox,
  LocalBoxOutOfPatch,
  EmptyPrompt,
  NoTermsFound,
  ExtractorFailed,
  ImageTooSmall,
  DetectorUnavailable,
  DetectorProtocolError,
  FixtureError,
  NoRegions,
  DegenerateBox,
  IoError,
  ImageDecodeError,
  BudgetTooSmall,
  EmptyPlan,
  PayloadTooLarge,
  UnsupportedProvider,
  AuthError,
  RateLimited,
  ProviderError,
  MissingGroundTruth,
  EmptyDataset,
  ConfigError,
};

std::string_view error_name(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above; the CLI
// prints error_name() and maps the code onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

// Provider failures keep the HTTP status and a short excerpt of the body.
class ProviderFailure : public Error {
 public:
  ProviderFailure(ErrorCode code, int status, std::string body_excerpt, const std::string& message)
      : Error(code, message), status_(status), body_excerpt_(std::move(body_excerpt)) {}

  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

}  // namespace zoomer
