#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mr2ct/random.hpp"

namespace mr2ct::diffusion {

using Tensor = std::vector<float>;
using View = std::span<const float>;

// Noise schedule. Index 0 is the clean image: beta[0] = 0, alpha_bar[0] = 1.
// Indices 1..T are the noising steps.
struct Schedule {
  int T = 0;
  double s = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  // alpha_bar(u) = f(u)/f(0), f(u) = cos^2(((u/T + s)/(1 + s)) * pi/2); betas
  // from consecutive ratios clipped to 0.999, alpha_bar re-accumulated as the
  // running product of (1 - beta).
  static Schedule cosine(int T = 1000, double s = 0.008);
};

enum class Prediction { kNoise, kImage };
enum class Scheduler { kDdim, kDdpm };

const char* prediction_name(Prediction p);
Prediction parse_prediction(const std::string& text);

struct SamplerConfig {
  Prediction mode = Prediction::kNoise;
  double eta = 1.0;
  int steps = 20;
  double guidance_w = 0.0;
  bool clamp_x0 = true;
  Scheduler scheduler = Scheduler::kDdim;

  void validate(const Schedule& schedule) const;
};

// A denoising network stand-in. `condition` may be empty (unconditioned
// model); a guidance pass supplies an all -1 ("black") condition.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Prediction mode() const = 0;
  virtual bool supports_unconditioned() const { return false; }
  virtual Tensor predict(View x, View condition, int step) const = 0;
};

// x_i = sqrt(abar_i) x0 + sqrt(1 - abar_i) eps
Tensor forward_noise(View x0, int step, View eps, const Schedule& schedule);

// Inverts the forward formula for the clean image; optionally clamps to [-1, 1].
Tensor x0_from_noise(View x_i, View eps_hat, int step, const Schedule& schedule,
                     bool clamp = false);
Tensor noise_from_x0(View x_i, View x0_hat, int step, const Schedule& schedule);

// Ancestral DDPM step i -> i-1; sigma = 0 at i = 1.
Tensor ddpm_step(View x_i, View x0_hat, int step, const Schedule& schedule, Rng& rng);

// DDIM step i -> j (j < i). j = 0 returns x0_hat.
Tensor ddim_step(View x_i, View x0_hat, View eps_hat, int step, int next, double eta,
                 const Schedule& schedule, Rng& rng);

// (w + 1) * pred(cond) - w * pred(black); a single call when w == 0.
Tensor guided_predict(const Denoiser& denoiser, View x, View condition, int step, double w);

// Visited steps, descending: {T} for one step, otherwise a uniform grid over
// [1, T] that includes both ends.
std::vector<int> timestep_sequence(int T, int steps);

// Called with (step, x_step) before each denoiser evaluation and with (0, out)
// at the end.
using TrajectoryObserver = std::function<void(int, View)>;

// Runs the reverse process from unit-Gaussian noise and returns the final
// clean-image estimate.
Tensor sample(const Denoiser& denoiser, View condition, std::size_t size,
              const SamplerConfig& config, const Schedule& schedule, Rng& rng,
              const TrajectoryObserver& observer = {});

}  // namespace mr2ct::diffusion
