#pragma once

#include <stdexcept>
#include <string>

namespace plesim {

/// Malformed input data (bad CSV row, invalid JSON document, ...).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// An analysis step could not produce a result (no hole found, fit
/// degenerate, ...). Distinct from invalid configuration, which is
/// reported via std::invalid_argument.
struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace plesim
