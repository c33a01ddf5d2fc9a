// SPDX-License-Identifier: Apache-2.0

#include "zoomer/error.hpp"

namespace zoomer {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::LocalBoxOutOfPatch: return "LocalBoxOutOfPatch";
    case ErrorCode::EmptyPrompt: return "EmptyPrompt";
    case ErrorCode::NoTermsFound: return "NoTermsFound";
    case ErrorCode::ExtractorFailed: return "ExtractorFailed";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::DetectorUnavailable: return "DetectorUnavailable";
    case ErrorCode::DetectorProtocolError: return "DetectorProtocolError";
    case ErrorCode::FixtureError: return "FixtureError";
    case ErrorCode::NoRegions: return "NoRegions";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ImageDecodeError: return "ImageDecodeError";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::PayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::UnsupportedProvider: return "UnsupportedProvider";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace zoomer
