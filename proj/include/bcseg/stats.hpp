#pragma once

#include <span>

namespace bcseg {

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0;
    /// All differences equal and nonzero: t is infinite, p reported as 0.
    bool degenerate = false;
};

/// Two-tailed paired-samples t-test on a - b. Throws UsageError when the
/// lengths differ or n < 2. All-zero differences give t = 0, p = 1.
[[nodiscard]] TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
[[nodiscard]] double regularized_incomplete_beta(double a, double b, double x);

/// P(|T| >= |t|) for Student's t with df degrees of freedom.
[[nodiscard]] double student_t_two_tailed(double t, double df);

}  // namespace bcseg
