#include "mr2ct/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mr2ct {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  if (text == "nan") return NAN;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    fail(Errc::kInvalidArgument, "not a number: '" + text + "'");
  }
  return v;
}

nlohmann::json json_double(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

std::string image_metrics_csv(const std::vector<ImageMetricRow>& rows) {
  std::ostringstream out;
  out << kImageMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.volume_id << ',' << r.crop_id << ',' << format_double(r.l1) << ','
        << format_double(r.mse) << ',' << format_double(r.psnr_db) << ',' << format_double(r.ssim)
        << ',' << format_double(r.vifp) << '\n';
  }
  return out.str();
}

std::string dice_csv(const std::vector<MethodDiceRow>& rows) {
  std::ostringstream out;
  out << kDiceHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.row.volume_id << ',' << r.row.vertebra_id << ','
        << dice_subset_name(r.row.subset) << ',' << format_double(r.row.dice) << '\n';
  }
  return out.str();
}

std::string ttest_csv(const std::vector<TTestRow>& rows) {
  std::ostringstream out;
  out << kTTestHeader << '\n';
  for (const auto& r : rows) {
    out << r.metric << ',' << r.method_a << ',' << r.method_b << ',' << format_double(r.result.t)
        << ',' << format_double(r.result.p) << ',' << r.result.n << '\n';
  }
  return out.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(Errc::kIoFailure, "cannot write " + path.string());
    out << text;
    if (!out) fail(Errc::kIoFailure, "write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& value) {
  write_text_atomic(path, value.dump(2) + "\n");
}

}  // namespace mr2ct
