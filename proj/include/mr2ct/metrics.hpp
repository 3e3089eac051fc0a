#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mr2ct/volume.hpp"

namespace mr2ct {

// Pixels farther than `radius` (Euclidean, pixels) from any nonzero label are
// set to 0.
Image2D spine_mask(const Image2D& image, const Label2D& labels, double radius = 10.0);

double l1(const Image2D& a, const Image2D& b);
double mse(const Image2D& a, const Image2D& b);

// 10 log10(peak^2 / mse); +infinity when mse == 0.
double psnr(const Image2D& a, const Image2D& b, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

// Single-scale SSIM: Gaussian window (sigma 1.5, 11x11), K1 = 0.01, K2 = 0.03,
// population covariance, mean over positions where the window fits.
double ssim(const Image2D& a, const Image2D& b, double peak);

// Pixel-domain VIF over four scales, reference first.
double vifp(const Image2D& reference, const Image2D& distorted, double sigma_nsq = 2.0);

enum class DiceSubset { kAll, kPosterior };
const char* dice_subset_name(DiceSubset subset);

struct DiceRow {
  std::string volume_id;
  std::int32_t vertebra_id = 0;
  DiceSubset subset = DiceSubset::kAll;
  double dice = 0.0;
};

// 2|A n B| / (|A| + |B|) for one binary pair; 1 when both are empty.
double dice_coefficient(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

// One row per reference label (subset all). With both subregion volumes
// given, also one posterior row per label whose posterior part is nonempty in
// either volume.
std::vector<DiceRow> dice_rows(const LabelVolume& reference, const LabelVolume& predicted,
                               const std::string& volume_id,
                               const LabelVolume* reference_subregions = nullptr,
                               const LabelVolume* predicted_subregions = nullptr);

// Mean of per-label Dice within each volume, then mean over volumes.
double dice_per_volume(const std::vector<DiceRow>& rows, DiceSubset subset);
// Mean over all (volume, label) rows pooled.
double dice_per_vertebra(const std::vector<DiceRow>& rows, DiceSubset subset);

// Renames predicted labels to the reference label they overlap most
// (greedy by overlap count, one-to-one). Unmatched labels become 0.
LabelVolume match_labels(const LabelVolume& predicted, const LabelVolume& reference);

}  // namespace mr2ct
