#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kle {

enum class ValidationLevel { quick, full };

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    double observed = 0.0;  // worst measured defect
    double tolerance = 0.0;
    double seconds = 0.0;
    double budget = 0.0;    // runtime budget, seconds
    std::string note;
};

struct ValidationReport {
    ValidationLevel level = ValidationLevel::quick;
    std::uint64_t seed = 0;
    std::vector<CriterionResult> criteria;
    bool all_pass = false;
    double seconds = 0.0;
    std::string to_json() const;
};

/// Run the acceptance suite. `tamper_id` (test hook) zeroes the named
/// criterion's tolerance so the harness can verify failure reporting.
ValidationReport run_validation(ValidationLevel level, std::uint64_t seed,
                                int threads = 1, int tamper_id = -1);

} // namespace kle
