#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include <json.hpp>

#include "mr2ct/volume.hpp"

namespace mr2ct::test {

inline std::filesystem::path data_dir() { return MR2CT_TEST_DATA_DIR; }

inline nlohmann::json oracles() {
  std::ifstream in(data_dir() / "oracles.json");
  return nlohmann::json::parse(in);
}

// Fresh scratch directory per call, removed by the owner.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mr2ct-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Geometry make_geometry(Index3 dims, Vec3 spacing = Vec3::Ones(), Vec3 origin = Vec3::Zero()) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  g.origin = origin;
  return g;
}

inline Mat3 rotation_xyz(double ax, double ay, double az) {
  return (Eigen::AngleAxisd(az, Vec3::UnitZ()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
          Eigen::AngleAxisd(ax, Vec3::UnitX()))
      .toRotationMatrix();
}

}  // namespace mr2ct::test
