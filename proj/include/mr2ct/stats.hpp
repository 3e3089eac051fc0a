#pragma once

#include <vector>

namespace mr2ct {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

// Paired two-sided t-test on d = x - y with n - 1 degrees of freedom.
// sd(d) == 0: t = 0, p = 1 when mean(d) == 0; otherwise t = +/-inf, p = 0.
TTestResult paired_ttest(const std::vector<double>& x, const std::vector<double>& y);

// Two-sided tail probability P(|T| >= |t|) for Student t with `df` degrees.
double student_t_two_sided(double t, double df);

// Largest p-value in the list.
double worst_p(const std::vector<double>& p_values);

}  // namespace mr2ct
