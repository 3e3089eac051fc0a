#include "mr2ct/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mr2ct/error.hpp"

namespace mr2ct::diffusion {
namespace {

void check_step(const Schedule& s, int step) {
  if (step < 1 || step > s.T) {
    fail(Errc::kStepOutOfRange, "timestep " + std::to_string(step) + " outside [1, " +
                                    std::to_string(s.T) + "]");
  }
}

void check_same(View a, View b, const char* what) {
  if (a.size() != b.size()) {
    fail(Errc::kShapeMismatch, std::string(what) + ": operand sizes differ (" +
                                   std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                   ")");
  }
}

}  // namespace

Schedule Schedule::cosine(int T, double s) {
  if (T < 1) fail(Errc::kInvalidSchedule, "schedule needs T >= 1");
  if (!(s > 0.0) || !std::isfinite(s)) fail(Errc::kInvalidSchedule, "cosine offset s must be > 0");
  auto f = [&](double u) {
    const double c = std::cos((u / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  Schedule out;
  out.T = T;
  out.s = s;
  out.beta.assign(T + 1, 0.0);
  out.alpha.assign(T + 1, 1.0);
  out.alpha_bar.assign(T + 1, 1.0);
  const double f0 = f(0.0);
  double prev = 1.0;
  for (int i = 1; i <= T; ++i) {
    const double cur = f(i) / f0;
    out.beta[i] = std::min(1.0 - cur / prev, 0.999);
    out.alpha[i] = 1.0 - out.beta[i];
    out.alpha_bar[i] = out.alpha_bar[i - 1] * out.alpha[i];
    prev = cur;
  }
  return out;
}

const char* prediction_name(Prediction p) { return p == Prediction::kNoise ? "noise" : "image"; }

Prediction parse_prediction(const std::string& text) {
  if (text == "noise") return Prediction::kNoise;
  if (text == "image") return Prediction::kImage;
  throw ValidationError("unknown prediction mode '" + text + "' (expected noise|image)");
}

void SamplerConfig::validate(const Schedule& schedule) const {
  if (steps < 1 || steps > schedule.T) {
    throw ValidationError("sampler steps must lie in [1, " + std::to_string(schedule.T) + "]");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("sampler eta must lie in [0, 1]");
  if (!(guidance_w >= 0.0) || !std::isfinite(guidance_w)) {
    throw ValidationError("guidance weight w must be >= 0");
  }
  if (scheduler == Scheduler::kDdpm && steps != schedule.T) {
    throw ValidationError("the DDPM sampler visits every step; set steps = T");
  }
}

Tensor forward_noise(View x0, int step, View eps, const Schedule& schedule) {
  check_step(schedule, step);
  check_same(x0, eps, "forward_noise");
  const double a = std::sqrt(schedule.alpha_bar[step]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[step]);
  Tensor out(x0.size());
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = static_cast<float>(a * x0[n] + b * eps[n]);
  return out;
}

Tensor x0_from_noise(View x_i, View eps_hat, int step, const Schedule& schedule, bool clamp) {
  check_step(schedule, step);
  check_same(x_i, eps_hat, "x0_from_noise");
  const double ab = schedule.alpha_bar[step];
  if (!(ab > 0.0)) fail(Errc::kZeroAlphaBar, "alpha_bar is zero at step " + std::to_string(step));
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x_i.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    double v = (x_i[n] - b * static_cast<double>(eps_hat[n])) / a;
    if (clamp) v = std::clamp(v, -1.0, 1.0);
    out[n] = static_cast<float>(v);
  }
  return out;
}

Tensor noise_from_x0(View x_i, View x0_hat, int step, const Schedule& schedule) {
  check_step(schedule, step);
  check_same(x_i, x0_hat, "noise_from_x0");
  const double ab = schedule.alpha_bar[step];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  if (!(b > 0.0)) fail(Errc::kZeroAlphaBar, "1 - alpha_bar is zero at step " + std::to_string(step));
  Tensor out(x_i.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = static_cast<float>((x_i[n] - a * static_cast<double>(x0_hat[n])) / b);
  }
  return out;
}

Tensor ddpm_step(View x_i, View x0_hat, int step, const Schedule& schedule, Rng& rng) {
  check_step(schedule, step);
  check_same(x_i, x0_hat, "ddpm_step");
  const double ab = schedule.alpha_bar[step], ab_prev = schedule.alpha_bar[step - 1];
  const double beta = schedule.beta[step];
  const double cx = std::sqrt(schedule.alpha[step]) * (1.0 - ab_prev) / (1.0 - ab);
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double sigma = step == 1 ? 0.0 : std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(x_i.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    double v = cx * x_i[n] + c0 * x0_hat[n];
    if (sigma > 0.0) v += sigma * normal(rng);
    out[n] = static_cast<float>(v);
  }
  return out;
}

Tensor ddim_step(View x_i, View x0_hat, View eps_hat, int step, int next, double eta,
                 const Schedule& schedule, Rng& rng) {
  check_step(schedule, step);
  if (next < 0 || next >= step) {
    fail(Errc::kStepOutOfRange, "ddim_step needs 0 <= j < i (i=" + std::to_string(step) +
                                    ", j=" + std::to_string(next) + ")");
  }
  check_same(x_i, x0_hat, "ddim_step");
  check_same(x_i, eps_hat, "ddim_step");
  if (next == 0) return Tensor(x0_hat.begin(), x0_hat.end());
  const double ab_i = schedule.alpha_bar[step], ab_j = schedule.alpha_bar[next];
  const double c1 = eta * std::sqrt((1.0 - ab_j) / (1.0 - ab_i) * (1.0 - ab_i / ab_j));
  // Numerical guard: the radicand can dip below zero by rounding.
  const double c2 = std::sqrt(std::max(0.0, (1.0 - ab_j) - c1 * c1));
  const double a = std::sqrt(ab_j);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor out(x_i.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    double v = a * x0_hat[n] + c2 * eps_hat[n];
    if (c1 > 0.0) v += c1 * normal(rng);
    out[n] = static_cast<float>(v);
  }
  return out;
}

Tensor guided_predict(const Denoiser& denoiser, View x, View condition, int step, double w) {
  if (!(w >= 0.0)) fail(Errc::kInvalidArgument, "guidance weight must be >= 0");
  Tensor cond = denoiser.predict(x, condition, step);
  check_same(x, cond, "denoiser output");
  if (w == 0.0) return cond;
  if (!denoiser.supports_unconditioned()) {
    fail(Errc::kUnconditionedUnsupported, "guidance w > 0 needs a denoiser that accepts a black condition");
  }
  if (condition.empty()) fail(Errc::kInvalidArgument, "guidance w > 0 needs a condition");
  const Tensor black(condition.size(), -1.0f);
  const Tensor uncond = denoiser.predict(x, black, step);
  check_same(x, uncond, "denoiser output");
  Tensor out(x.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = static_cast<float>((w + 1.0) * cond[n] - w * static_cast<double>(uncond[n]));
  }
  return out;
}

std::vector<int> timestep_sequence(int T, int steps) {
  if (steps < 1 || steps > T) fail(Errc::kInvalidArgument, "steps must lie in [1, T]");
  if (steps == 1) return {T};
  std::vector<int> seq(steps);
  const long long span = T - 1, div = steps - 1;
  for (int k = 0; k < steps; ++k) {
    // 1 + round(k * (T - 1) / (steps - 1)) in integer arithmetic.
    seq[steps - 1 - k] = static_cast<int>(1 + (2 * k * span + div) / (2 * div));
  }
  return seq;
}

Tensor sample(const Denoiser& denoiser, View condition, std::size_t size,
              const SamplerConfig& config, const Schedule& schedule, Rng& rng,
              const TrajectoryObserver& observer) {
  config.validate(schedule);
  if (denoiser.mode() != config.mode) {
    fail(Errc::kInvalidArgument, std::string("denoiser predicts ") +
                                     prediction_name(denoiser.mode()) + " but the sampler expects " +
                                     prediction_name(config.mode));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x(size);
  for (auto& v : x) v = static_cast<float>(normal(rng));

  const std::vector<int> seq = timestep_sequence(schedule.T, config.steps);
  Tensor x0;
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const int i = seq[k];
    const int j = k + 1 < seq.size() ? seq[k + 1] : 0;
    if (observer) observer(i, x);
    const Tensor pred = guided_predict(denoiser, x, condition, i, config.guidance_w);
    Tensor eps;
    if (config.mode == Prediction::kNoise) {
      eps = pred;
      x0 = x0_from_noise(x, eps, i, schedule, false);
    } else {
      x0 = pred;
      eps = noise_from_x0(x, x0, i, schedule);
    }
    if (config.clamp_x0) {
      for (auto& v : x0) v = std::clamp(v, -1.0f, 1.0f);
    }
    x = config.scheduler == Scheduler::kDdpm ? ddpm_step(x, x0, i, schedule, rng)
                                             : ddim_step(x, x0, eps, i, j, config.eta, schedule, rng);
  }
  if (observer) observer(0, x0);
  return x0;
}

}  // namespace mr2ct::diffusion
