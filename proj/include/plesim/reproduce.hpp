#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace plesim::reproduce {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct Options {
    std::string data_dir = "data";  // location of the bundled catalog files
    std::uint64_t seed = 20260809;
    int threads = 1;
};

/// Runs the full synthetic round-trip checks (survey, lifetimes, hole
/// burning, endpoint cross-checks, Zeeman, cavity design, detector
/// formula and the property suite) and reports one result per criterion.
std::vector<CriterionResult> run_acceptance(const Options& options);

}  // namespace plesim::reproduce
