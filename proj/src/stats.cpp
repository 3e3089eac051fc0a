#include "mr2ct/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/beta.hpp>

#include "mr2ct/error.hpp"

namespace mr2ct {

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) fail(Errc::kInvalidArgument, "student t needs df > 0");
  if (std::isnan(t)) fail(Errc::kInvalidArgument, "student t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  // P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  return boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t));
}

TTestResult paired_ttest(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    fail(Errc::kLengthMismatch, "paired_ttest: samples differ in length (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
  }
  const std::size_t n = x.size();
  if (n < 2) fail(Errc::kTooFewSamples, "paired_ttest: need at least 2 pairs");
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += x[k] - y[k];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = x[k] - y[k] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult r;
  r.n = n;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_two_sided(r.t, static_cast<double>(n - 1));
  return r;
}

double worst_p(const std::vector<double>& p_values) {
  if (p_values.empty()) fail(Errc::kEmptyList, "worst_p: empty list");
  return *std::max_element(p_values.begin(), p_values.end());
}

}  // namespace mr2ct
