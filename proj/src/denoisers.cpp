#include "mr2ct/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mr2ct/error.hpp"
#include "mr2ct/nifti.hpp"

namespace mr2ct::diffusion {
namespace {

void check_step(const std::vector<double>& alpha_bar, int step) {
  if (step < 1 || step >= static_cast<int>(alpha_bar.size())) {
    fail(Errc::kStepOutOfRange, "denoiser called with timestep " + std::to_string(step));
  }
}

std::string step_name(int step, bool unconditioned) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%04d%s", step, unconditioned ? "_uncond" : "");
  return buf;
}

}  // namespace

bool is_black(View condition) {
  return !condition.empty() &&
         std::all_of(condition.begin(), condition.end(), [](float v) { return v == -1.0f; });
}

SingleTargetDenoiser::SingleTargetDenoiser(Tensor target, Prediction mode,
                                           const Schedule& schedule,
                                           std::optional<Tensor> unconditioned_target)
    : target_(std::move(target)), mode_(mode), alpha_bar_(schedule.alpha_bar) {
  if (unconditioned_target) {
    if (unconditioned_target->size() != target_.size()) {
      fail(Errc::kShapeMismatch, "unconditioned target size differs from target");
    }
    uncond_ = std::move(*unconditioned_target);
  } else {
    const double mean = target_.empty() ? 0.0
                                        : std::accumulate(target_.begin(), target_.end(), 0.0) /
                                              static_cast<double>(target_.size());
    uncond_.assign(target_.size(), static_cast<float>(mean));
  }
}

Tensor SingleTargetDenoiser::predict(View x, View condition, int step) const {
  check_step(alpha_bar_, step);
  if (x.size() != target_.size()) fail(Errc::kShapeMismatch, "input size differs from target");
  const Tensor& t = is_black(condition) ? uncond_ : target_;
  if (mode_ == Prediction::kImage) return t;
  const double ab = alpha_bar_[step];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Tensor out(x.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = static_cast<float>((x[n] - a * static_cast<double>(t[n])) / b);
  }
  return out;
}

GaussianPosteriorDenoiser::GaussianPosteriorDenoiser(double mean, double variance, Prediction mode,
                                                     const Schedule& schedule)
    : mean_(mean), variance_(variance), mode_(mode), alpha_bar_(schedule.alpha_bar) {
  if (!(variance >= 0.0)) fail(Errc::kInvalidArgument, "prior variance must be >= 0");
}

Tensor GaussianPosteriorDenoiser::predict(View x, View, int step) const {
  check_step(alpha_bar_, step);
  const double ab = alpha_bar_[step];
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  const double gain = a * variance_ / (ab * variance_ + 1.0 - ab);
  Tensor out(x.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double x0 = mean_ + gain * (x[n] - a * mean_);
    out[n] = static_cast<float>(mode_ == Prediction::kImage ? x0 : (x[n] - a * x0) / b);
  }
  return out;
}

ReparameterizedDenoiser::ReparameterizedDenoiser(const Denoiser& inner, Prediction mode,
                                                 const Schedule& schedule)
    : inner_(inner), mode_(mode), schedule_(schedule) {}

Tensor ReparameterizedDenoiser::predict(View x, View condition, int step) const {
  Tensor p = inner_.predict(x, condition, step);
  if (inner_.mode() == mode_) return p;
  return mode_ == Prediction::kImage ? x0_from_noise(x, p, step, schedule_, false)
                                     : noise_from_x0(x, p, step, schedule_);
}

PredictionStore::PredictionStore(std::filesystem::path directory)
    : directory_(std::move(directory)) {
  if (!std::filesystem::is_directory(directory_)) {
    throw ValidationError("prediction directory not found: " + directory_.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(directory_)) {
    if (entry.path().filename().string().find("_uncond.nii") != std::string::npos) {
      has_uncond_ = true;
      break;
    }
  }
}

std::filesystem::path PredictionStore::find(int step, bool unconditioned) const {
  const std::string stem = step_name(step, unconditioned);
  for (const char* ext : {".nii.gz", ".nii"}) {
    const auto p = directory_ / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  fail(Errc::kIoFailure, "no prediction file " + stem + ".nii[.gz] in " + directory_.string());
}

const Volume& PredictionStore::get(int step, bool unconditioned) const {
  const auto key = std::make_pair(step, unconditioned);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return *it->second;
  }
  auto vol = std::make_shared<const Volume>(
      nifti::read_volume(find(step, unconditioned), nullptr, IntensitySpace::kNormalized));
  std::lock_guard<std::mutex> lock(mutex_);
  auto [it, inserted] = cache_.emplace(key, std::move(vol));
  return *it->second;
}

ExternalPredictionDenoiser::ExternalPredictionDenoiser(std::shared_ptr<const PredictionStore> store,
                                                       Prediction mode, Extractor extract)
    : store_(std::move(store)), mode_(mode), extract_(std::move(extract)) {}

Tensor ExternalPredictionDenoiser::predict(View x, View condition, int step) const {
  Tensor out = extract_(store_->get(step, is_black(condition)));
  if (out.size() != x.size()) {
    fail(Errc::kShapeMismatch, "stored prediction for step " + std::to_string(step) +
                                   " does not cover the sampled region");
  }
  return out;
}

}  // namespace mr2ct::diffusion
