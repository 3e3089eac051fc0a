#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mr2ct/metrics.hpp"
#include "mr2ct/stats.hpp"

namespace mr2ct {

struct ImageMetricRow {
  std::string method;
  std::string volume_id;
  int crop_id = 0;
  double l1 = 0.0;
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double vifp = 0.0;
};

struct MethodDiceRow {
  std::string method;
  DiceRow row;
};

struct TTestRow {
  std::string metric;
  std::string method_a;
  std::string method_b;
  TTestResult result;
};

inline constexpr const char* kImageMetricsHeader = "method,volume_id,crop_id,l1,mse,psnr_db,ssim,vifp";
inline constexpr const char* kDiceHeader = "method,volume_id,vertebra_id,subset,dice";
inline constexpr const char* kTTestHeader = "metric,method_a,method_b,t,p,n";

// Shortest round-trip decimal; "inf", "-inf" and "nan" for non-finite values.
std::string format_double(double v);
double parse_double(const std::string& text);

// JSON number, or the strings "inf" / "-inf" / "nan" for non-finite values.
nlohmann::json json_double(double v);

std::string image_metrics_csv(const std::vector<ImageMetricRow>& rows);
std::string dice_csv(const std::vector<MethodDiceRow>& rows);
std::string ttest_csv(const std::vector<TTestRow>& rows);

// Writes to "<path>.tmp" then renames, creating parent directories.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace mr2ct
