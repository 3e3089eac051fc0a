#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mr2ct/denoisers.hpp"
#include "mr2ct/diffusion.hpp"
#include "mr2ct/error.hpp"
#include "mr2ct/metrics.hpp"
#include "mr2ct/nifti.hpp"
#include "mr2ct/phantom.hpp"
#include "mr2ct/pipeline.hpp"
#include "mr2ct/preprocess.hpp"
#include "mr2ct/registration.hpp"
#include "mr2ct/segmentation.hpp"
#include "mr2ct/stats.hpp"

namespace py = pybind11;
using namespace mr2ct;

namespace {

template <typename T>
using FArray = py::array_t<T, py::array::f_style | py::array::forcecast>;
template <typename T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

// Volumes cross the boundary as (nx, ny, nz) arrays indexed [i, j, k] plus a
// 4x4 voxel-to-world affine, matching nibabel's convention.
Geometry geometry_of(const py::buffer_info& info, const Mat4& affine) {
  if (info.ndim != 3) throw ValidationError("expected a 3D array");
  return Geometry::from_affine(affine, {static_cast<int>(info.shape[0]), static_cast<int>(info.shape[1]),
                                        static_cast<int>(info.shape[2])});
}

Volume to_volume(const FArray<float>& a, const Mat4& affine, IntensitySpace space) {
  const auto info = a.request();
  const Geometry g = geometry_of(info, affine);
  const auto* p = static_cast<const float*>(info.ptr);
  return Volume(g, space, std::vector<float>(p, p + g.voxel_count()));
}

LabelVolume to_labels(const FArray<std::int32_t>& a, const Mat4& affine, LabelKind kind = LabelKind::kVertebra) {
  const auto info = a.request();
  const Geometry g = geometry_of(info, affine);
  const auto* p = static_cast<const std::int32_t*>(info.ptr);
  return LabelVolume(g, std::vector<std::int32_t>(p, p + g.voxel_count()), kind);
}

template <typename T>
FArray<T> to_array(const Grid3<T>& v) {
  const Index3& d = v.dims();
  FArray<T> out({static_cast<py::ssize_t>(d[0]), static_cast<py::ssize_t>(d[1]), static_cast<py::ssize_t>(d[2])});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

Image2D to_image(const CArray<float>& a) {
  const auto info = a.request();
  if (info.ndim != 2) throw ValidationError("expected a 2D array");
  const auto* p = static_cast<const float*>(info.ptr);
  return Image2D(static_cast<int>(info.shape[0]), static_cast<int>(info.shape[1]),
                 std::vector<float>(p, p + info.size));
}

py::dict report_dict(const FitReport& r) {
  py::dict d;
  d["rotation"] = Mat3(r.transform.rotation);
  d["translation"] = Vec3(r.transform.translation);
  d["rms"] = r.rms;
  d["collinear"] = r.collinear;
  d["n_points"] = r.n_points;
  d["singular_values"] = Vec3(r.singular_values);
  return d;
}

std::vector<Vec3> to_points(const CArray<double>& a) {
  const auto info = a.request();
  if (info.ndim != 2 || info.shape[1] != 3) throw ValidationError("expected an (N, 3) array");
  const auto* p = static_cast<const double*>(info.ptr);
  std::vector<Vec3> pts;
  for (py::ssize_t n = 0; n < info.shape[0]; ++n) pts.emplace_back(p[3 * n], p[3 * n + 1], p[3 * n + 2]);
  return pts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MR to CT spine translation pipeline";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      validation(e.what());
    } catch (const Error& e) {
      error(e.what());
    }
  });

  m.def(
      "read_nifti",
      [](const std::filesystem::path& path) {
        const Volume v = nifti::read_volume(path);
        return py::make_tuple(to_array(v), v.geometry().affine());
      },
      py::arg("path"), "Reads a scalar NIfTI volume. Returns (array, affine).");
  m.def(
      "read_nifti_labels",
      [](const std::filesystem::path& path) {
        const LabelVolume v = nifti::read_labels(path);
        return py::make_tuple(to_array(v), v.geometry().affine());
      },
      py::arg("path"));
  m.def(
      "write_nifti",
      [](const std::filesystem::path& path, const FArray<float>& data, const Mat4& affine, const std::string& dtype) {
        const Volume v = to_volume(data, affine, IntensitySpace::kUnknown);
        const nifti::Datatype dt = dtype == "uint8"   ? nifti::Datatype::kUint8
                                   : dtype == "int16" ? nifti::Datatype::kInt16
                                   : dtype == "float32"
                                       ? nifti::Datatype::kFloat32
                                       : throw ValidationError("unsupported dtype '" + dtype + "'");
        nifti::write_volume(v, path, dt);
      },
      py::arg("path"), py::arg("data"), py::arg("affine"), py::arg("dtype") = "float32");

  m.def(
      "generate_phantom",
      [](int n_vertebrae, double spacing, double curvature, double noise_sigma, std::uint64_t seed) {
        PhantomConfig cfg;
        cfg.n_vertebrae = n_vertebrae;
        cfg.spacing = spacing;
        cfg.curvature = curvature;
        cfg.noise_sigma = noise_sigma;
        cfg.seed = seed;
        const Phantom ph = generate_phantom(cfg);
        py::dict d;
        d["mr"] = to_array(ph.mr);
        d["ct"] = to_array(ph.ct);
        d["labels"] = to_array(ph.labels);
        d["subregions"] = to_array(ph.subregions);
        d["affine"] = ph.ct.geometry().affine();
        return d;
      },
      py::arg("n_vertebrae") = 5, py::arg("spacing") = 1.0, py::arg("curvature") = 0.0, py::arg("noise_sigma") = 5.0,
      py::arg("seed") = 0);

  m.def(
      "fit_rigid",
      [](const CArray<double>& src, const CArray<double>& dst) {
        return report_dict(fit_rigid_points(to_points(src), to_points(dst)));
      },
      py::arg("src"), py::arg("dst"), "Least-squares rigid fit with dst ~= R src + t.");

  m.def(
      "threshold_segment",
      [](const FArray<float>& ct, const Mat4& affine) {
        const Segmentation s = threshold_segment(to_volume(ct, affine, IntensitySpace::kHU));
        return py::make_tuple(to_array(s.labels), to_array(s.subregions));
      },
      py::arg("ct"), py::arg("affine"), "Segments a CT in HU. Returns (labels, subregions).");

  m.def(
      "cosine_schedule",
      [](int T, double s) {
        const auto sch = diffusion::Schedule::cosine(T, s);
        py::dict d;
        d["beta"] = sch.beta;
        d["alpha"] = sch.alpha;
        d["alpha_bar"] = sch.alpha_bar;
        return d;
      },
      py::arg("T") = 1000, py::arg("s") = 0.008);
  m.def(
      "sample_oracle",
      [](const CArray<float>& target, int steps, double eta, const std::string& mode, int T, std::uint64_t seed) {
        const auto info = target.request();
        const auto* p = static_cast<const float*>(info.ptr);
        const auto schedule = diffusion::Schedule::cosine(T);
        diffusion::SamplerConfig cfg;
        cfg.mode = diffusion::parse_prediction(mode);
        cfg.steps = steps;
        cfg.eta = eta;
        diffusion::SingleTargetDenoiser oracle(diffusion::Tensor(p, p + info.size), cfg.mode, schedule);
        Rng rng(seed);
        const auto out = diffusion::sample(oracle, {}, static_cast<std::size_t>(info.size), cfg, schedule, rng);
        CArray<float> result(info.shape);
        std::copy(out.begin(), out.end(), result.mutable_data());
        return result;
      },
      py::arg("target"), py::arg("steps") = 20, py::arg("eta") = 0.0, py::arg("mode") = "noise", py::arg("T") = 1000,
      py::arg("seed") = 0, "Runs the sampler with an oracle denoiser that knows `target`.");

  m.def("l1", [](const CArray<float>& a, const CArray<float>& b) { return l1(to_image(a), to_image(b)); });
  m.def("mse", [](const CArray<float>& a, const CArray<float>& b) { return mse(to_image(a), to_image(b)); });
  m.def(
      "psnr", [](const CArray<float>& a, const CArray<float>& b, double peak) { return psnr(to_image(a), to_image(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
  m.def(
      "ssim", [](const CArray<float>& a, const CArray<float>& b, double peak) { return ssim(to_image(a), to_image(b), peak); },
      py::arg("a"), py::arg("b"), py::arg("peak") = 2.0);
  m.def(
      "vifp",
      [](const CArray<float>& ref, const CArray<float>& dist, double sigma_nsq) {
        return vifp(to_image(ref), to_image(dist), sigma_nsq);
      },
      py::arg("reference"), py::arg("distorted"), py::arg("sigma_nsq") = 2.0);
  m.def(
      "dice",
      [](const FArray<std::int32_t>& reference, const FArray<std::int32_t>& predicted) {
        const Mat4 eye = Mat4::Identity();
        py::dict d;
        for (const auto& row : dice_rows(to_labels(reference, eye), to_labels(predicted, eye), "v")) {
          d[py::int_(row.vertebra_id)] = row.dice;
        }
        return d;
      },
      py::arg("reference"), py::arg("predicted"), "Per-label Dice keyed by reference label.");
  m.def(
      "paired_ttest",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const TTestResult r = paired_ttest(x, y);
        return py::make_tuple(r.t, r.p);
      },
      py::arg("x"), py::arg("y"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "mr2ct");
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command line. Returns (exit_code, stdout, stderr).");
}
