#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include "mr2ct/diffusion.hpp"
#include "mr2ct/volume.hpp"

namespace mr2ct::diffusion {

// True when `condition` is nonempty and every entry is -1.
bool is_black(View condition);

// Knows the clean target x*. Noise mode returns
// (x_i - sqrt(abar_i) x*) / sqrt(1 - abar_i); image mode returns x*.
// A black condition switches to the unconditioned target (the mean of x*
// everywhere unless given).
class SingleTargetDenoiser : public Denoiser {
 public:
  SingleTargetDenoiser(Tensor target, Prediction mode, const Schedule& schedule,
                       std::optional<Tensor> unconditioned_target = std::nullopt);

  Prediction mode() const override { return mode_; }
  bool supports_unconditioned() const override { return true; }
  Tensor predict(View x, View condition, int step) const override;

 private:
  Tensor target_;
  Tensor uncond_;
  Prediction mode_;
  std::vector<double> alpha_bar_;
};

// Exact posterior mean for an elementwise Gaussian prior x0 ~ N(mean, variance):
// E[x0 | x_i] = mean + sqrt(abar) var (x_i - sqrt(abar) mean) / (abar var + 1 - abar).
class GaussianPosteriorDenoiser : public Denoiser {
 public:
  GaussianPosteriorDenoiser(double mean, double variance, Prediction mode,
                            const Schedule& schedule);

  Prediction mode() const override { return mode_; }
  Tensor predict(View x, View condition, int step) const override;

 private:
  double mean_;
  double variance_;
  Prediction mode_;
  std::vector<double> alpha_bar_;
};

// Predicts zeros in either mode.
class ZeroDenoiser : public Denoiser {
 public:
  explicit ZeroDenoiser(Prediction mode) : mode_(mode) {}
  Prediction mode() const override { return mode_; }
  bool supports_unconditioned() const override { return true; }
  Tensor predict(View x, View, int) const override { return Tensor(x.size(), 0.0f); }

 private:
  Prediction mode_;
};

// Wraps another denoiser and converts its output to `mode` through the
// forward formula.
class ReparameterizedDenoiser : public Denoiser {
 public:
  ReparameterizedDenoiser(const Denoiser& inner, Prediction mode, const Schedule& schedule);

  Prediction mode() const override { return mode_; }
  bool supports_unconditioned() const override { return inner_.supports_unconditioned(); }
  Tensor predict(View x, View condition, int step) const override;

 private:
  const Denoiser& inner_;
  Prediction mode_;
  const Schedule& schedule_;
};

// Precomputed network outputs on disk, one NIfTI file per timestep:
// t0020.nii[.gz] (conditioned) and optionally t0020_uncond.nii[.gz].
// Files are loaded lazily and cached; safe to share across threads.
class PredictionStore {
 public:
  explicit PredictionStore(std::filesystem::path directory);

  const std::filesystem::path& directory() const { return directory_; }
  bool has_unconditioned() const { return has_uncond_; }
  const Volume& get(int step, bool unconditioned) const;

 private:
  std::filesystem::path find(int step, bool unconditioned) const;

  std::filesystem::path directory_;
  bool has_uncond_ = false;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, bool>, std::shared_ptr<const Volume>> cache_;
};

// Reads predictions from a store. `extract` maps a stored full volume to the
// flattened region the sampler is working on (a tile or patch).
class ExternalPredictionDenoiser : public Denoiser {
 public:
  using Extractor = std::function<Tensor(const Volume&)>;

  ExternalPredictionDenoiser(std::shared_ptr<const PredictionStore> store, Prediction mode,
                             Extractor extract);

  Prediction mode() const override { return mode_; }
  bool supports_unconditioned() const override { return store_->has_unconditioned(); }
  Tensor predict(View x, View condition, int step) const override;

 private:
  std::shared_ptr<const PredictionStore> store_;
  Prediction mode_;
  Extractor extract_;
};

}  // namespace mr2ct::diffusion
