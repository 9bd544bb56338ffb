#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xlner {

/// One finite-difference suite (many random instances of one loss).
struct GradCheckSuite {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    std::vector<GradCheckSuite> suites;

    bool all_passed() const;
};

/// Compare analytic gradients of the supervised, distillation, and
/// language-ID losses against central finite differences on random small
/// instances. Relative error per coordinate uses a denominator floored at
/// 1e-8. Deterministic in the seed.
GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t instances = 25,
                              double epsilon = 1e-5, double tolerance = 1e-4);

} // namespace xlner
