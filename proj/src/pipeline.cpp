#include "mr2ct/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "mr2ct/augmentation.hpp"
#include "mr2ct/nifti.hpp"
#include "mr2ct/phantom.hpp"
#include "mr2ct/preprocess.hpp"
#include "mr2ct/registration.hpp"
#include "mr2ct/segmentation.hpp"

namespace mr2ct {

using nlohmann::json;
namespace dif = diffusion;

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  const std::size_t workers = std::min<std::size_t>(std::max(jobs, 1), count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto run = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= count || stop.load()) return;
      try {
        body(k);
      } catch (...) {
        errors[k] = std::current_exception();
        stop.store(true);
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

// ---------------------------------------------------------------------------
// Small helpers

void require_file(const Path& path, const std::string& what) {
  if (path.empty()) throw ValidationError(what + " is not set");
  if (!std::filesystem::is_regular_file(path)) {
    throw ValidationError(what + " not found: " + path.string(), Errc::kIoFailure);
  }
}

Geometry header_geometry(const Path& path) { return nifti::read_header(path).geometry(); }

void require_same_grid(const Path& a, const Path& b, const std::string& what) {
  if (!header_geometry(a).same_grid(header_geometry(b))) {
    throw ValidationError(what + ": " + a.string() + " and " + b.string() + " are on different grids",
                          Errc::kGeometryMismatch);
  }
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json transform_json(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) r.push_back(vec_json(t.rotation.row(i).transpose()));
  return {{"rotation", r},
          {"translation_mm", vec_json(t.translation)},
          {"angle_deg", t.angle() * 180.0 / std::numbers::pi}};
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Translation regions

struct Region {
  std::size_t size = 0;
  std::function<dif::Tensor(const Grid3<float>&)> extract;
  dif::Tensor condition;
};

class MappedPredictions {
 public:
  explicit MappedPredictions(std::function<Volume(const Volume&)> map) : map_(std::move(map)) {}

  const Volume& get(const Volume& raw) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(&raw);
    if (it == cache_.end()) it = cache_.emplace(&raw, map_(raw)).first;
    return it->second;
  }

 private:
  std::function<Volume(const Volume&)> map_;
  std::mutex mutex_;
  std::map<const Volume*, Volume> cache_;
};

std::unique_ptr<dif::Denoiser> make_denoiser(const DenoiserSpec& spec, const Region& region,
                                             const Grid3<float>* target_working,
                                             const std::shared_ptr<MappedPredictions>& mapped,
                                             const dif::Schedule& schedule) {
  if (spec.name == "single-target") {
    if (target_working == nullptr) fail(Errc::kInvalidConfig, "single-target denoiser needs a target");
    return std::make_unique<dif::SingleTargetDenoiser>(region.extract(*target_working), spec.mode, schedule);
  }
  if (spec.name == "gaussian") {
    return std::make_unique<dif::GaussianPosteriorDenoiser>(spec.prior_mean, spec.prior_variance, spec.mode,
                                                            schedule);
  }
  if (spec.name == "zero") return std::make_unique<dif::ZeroDenoiser>(spec.mode);
  if (spec.name == "external") {
    if (!spec.store) fail(Errc::kInvalidConfig, "external denoiser needs a prediction store");
    auto extract = region.extract;
    return std::make_unique<dif::ExternalPredictionDenoiser>(
        spec.store, spec.mode, [extract, mapped](const Volume& raw) { return extract(mapped->get(raw)); });
  }
  fail(Errc::kInvalidConfig, "unknown denoiser '" + spec.name + "'");
}

dif::Tensor flatten(const Grid3<float>& g) { return g.data(); }

}  // namespace

TranslateOptions translate_options(const PipelineConfig& cfg) {
  const TranslateSection& t = cfg.translate;
  TranslateOptions o;
  o.recipe = t.recipe;
  o.sampler = t.sampler;
  o.T = t.T;
  o.s = t.s;
  o.tile = t.tile;
  o.patch = t.patch;
  o.stride = t.stride;
  o.iso_spacing = t.iso_spacing;
  o.seed = cfg.seed;
  o.jobs = cfg.jobs;
  return o;
}

Volume translate_volume(const Volume& mr_in, const DenoiserSpec& spec, const TranslateOptions& opt) {
  const Volume mr = mr_in.space() == IntensitySpace::kNormalized ? mr_in : normalize_mr(mr_in);
  if (spec.target && !spec.target->geometry().same_grid(mr.geometry())) {
    fail(Errc::kGeometryMismatch, "translate: target CT and MR are on different grids");
  }
  const dif::Schedule schedule = dif::Schedule::cosine(opt.T, opt.s);
  opt.sampler.validate(schedule);

  if (opt.recipe == Recipe::k2D) {
    const int n_slices = mr.dim(0);
    const int rows = mr.dim(2), cols = mr.dim(1);
    const int prows = std::max(rows, opt.tile), pcols = std::max(cols, opt.tile);
    Window2 placed;
    pad_to_size(Image2D(rows, cols), prows, pcols, -1.0f, &placed);
    const auto windows = patch_windows({prows, pcols, 1}, {opt.tile, opt.tile, 1}, {opt.tile, opt.tile, 1});

    auto tile_of = [=](const Grid3<float>& vol, int slice, const Window3& w) {
      Image2D img(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) img(r, c) = vol(slice, c, r);
      }
      Image2D padded = pad_to_size(img, prows, pcols, -1.0f, nullptr);
      return crop(padded, Window2{w.lo[0], w.lo[1], w.size[0], w.size[1]}).data;
    };
    auto mapped = std::make_shared<MappedPredictions>([](const Volume& v) { return v; });

    const std::size_t per_slice = windows.size();
    const std::size_t count = static_cast<std::size_t>(n_slices) * per_slice;
    std::vector<dif::Tensor> outputs(count);
    parallel_for(count, opt.jobs, [&](std::size_t k) {
      const int slice = static_cast<int>(k / per_slice);
      const Window3 w = windows[k % per_slice];
      Region region;
      region.size = static_cast<std::size_t>(w.size[0]) * w.size[1];
      region.extract = [=](const Grid3<float>& vol) { return tile_of(vol, slice, w); };
      region.condition = tile_of(mr, slice, w);
      const auto denoiser = make_denoiser(spec, region, spec.target ? &*spec.target : nullptr, mapped, schedule);
      Rng rng(derive_seed(opt.seed, k));
      outputs[k] = dif::sample(*denoiser, region.condition, region.size, opt.sampler, schedule, rng);
    });

    Volume out(mr.geometry(), IntensitySpace::kNormalized, -1.0f);
    for (int slice = 0; slice < n_slices; ++slice) {
      std::vector<Tile2D> tiles;
      for (std::size_t t = 0; t < per_slice; ++t) {
        const Window3& w = windows[t];
        tiles.push_back({Image2D(w.size[0], w.size[1], std::move(outputs[slice * per_slice + t])),
                         Window2{w.lo[0], w.lo[1], w.size[0], w.size[1]}});
      }
      const Image2D stitched = stitch_2d(tiles, prows, pcols);
      set_sagittal_image(out, slice, crop(stitched, placed));
    }
    return out;
  }

  // 3D recipe.
  const Vec3 iso = Vec3::Constant(opt.iso_spacing);
  PadRecord record;
  auto to_working = [&](const Volume& v) {
    PadRecord r;
    Volume w = pad_to_multiple(resample_to_spacing(v, iso), 8, &r);
    return w;
  };
  const Volume mr_w = pad_to_multiple(resample_to_spacing(mr, iso), 8, &record);
  std::optional<Volume> target_w;
  if (spec.target) target_w = to_working(*spec.target);
  auto mapped = std::make_shared<MappedPredictions>(to_working);

  Index3 patch, stride;
  for (int a = 0; a < 3; ++a) {
    patch[a] = std::min(opt.patch[a], mr_w.dim(a));
    stride[a] = opt.stride[a] > 0 ? std::min(opt.stride[a], patch[a]) : patch[a];
  }
  const auto windows = patch_windows(mr_w.dims(), patch, stride);
  std::vector<dif::Tensor> outputs(windows.size());
  parallel_for(windows.size(), opt.jobs, [&](std::size_t k) {
    const Window3 w = windows[k];
    Region region;
    region.size = static_cast<std::size_t>(w.size[0]) * w.size[1] * w.size[2];
    region.extract = [w](const Grid3<float>& vol) {
      const Volume v(vol.geometry(), IntensitySpace::kNormalized, vol.data());
      return flatten(extract_window(v, w));
    };
    region.condition = region.extract(mr_w);
    const auto ramps = coordinate_ramps(mr_w.dims(), w);
    for (const auto& r : ramps) region.condition.insert(region.condition.end(), r.data().begin(), r.data().end());
    const auto denoiser = make_denoiser(spec, region, target_w ? &*target_w : nullptr, mapped, schedule);
    Rng rng(derive_seed(opt.seed, k));
    outputs[k] = dif::sample(*denoiser, region.condition, region.size, opt.sampler, schedule, rng);
  });
  std::vector<Tile3D> tiles;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    Geometry g;
    g.dims = windows[k].size;
    tiles.push_back({Grid3<float>(g, std::move(outputs[k])), windows[k]});
  }
  const Grid3<float> stitched = stitch_3d(tiles, mr_w.geometry());
  const Volume synth_w(mr_w.geometry(), IntensitySpace::kNormalized, stitched.data());
  return resample(unpad(synth_w, record), mr.geometry(), Mat4::Identity(), -1.0f);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

Image2D to_byte_range(const Image2D& img) {
  Image2D out = img;
  for (auto& v : out.data) v = static_cast<float>((static_cast<double>(v) + 1.0) * 127.5);
  return out;
}

struct Segmented {
  LabelVolume labels;
  LabelVolume subregions;
};

Segmented segment_for_dice(const Volume& ct_hu, const LabelVolume& reference, const ThresholdParams& params,
                           const std::set<std::int32_t>& excluded) {
  Segmented s{LabelVolume(ct_hu.geometry()), LabelVolume(ct_hu.geometry(), LabelKind::kSubregion)};
  Segmentation seg;
  try {
    seg = threshold_segment(ct_hu, params);
  } catch (const Error& e) {
    if (e.code() != Errc::kEmptyBoneMask) throw;
    return s;
  }
  s.labels = match_labels(seg.labels, reference);
  s.subregions = seg.subregions;
  for (std::size_t n = 0; n < s.labels.size(); ++n) {
    std::int32_t& id = s.labels.data()[n];
    if (id != 0 && excluded.count(id)) id = 0;
    if (id == 0) s.subregions.data()[n] = kBackground;
  }
  return s;
}

void add_ttests(const std::string& metric, const std::map<std::string, std::map<std::string, double>>& values,
                std::vector<TTestRow>& out) {
  std::vector<std::string> methods;
  for (const auto& [m, v] : values) methods.push_back(m);
  for (std::size_t a = 0; a < methods.size(); ++a) {
    for (std::size_t b = a + 1; b < methods.size(); ++b) {
      std::vector<double> x, y;
      for (const auto& [key, va] : values.at(methods[a])) {
        auto it = values.at(methods[b]).find(key);
        if (it == values.at(methods[b]).end()) continue;
        if (!std::isfinite(va) || !std::isfinite(it->second)) continue;
        x.push_back(va);
        y.push_back(it->second);
      }
      TTestRow row{metric, methods[a], methods[b], {}};
      if (x.size() >= 2) {
        row.result = paired_ttest(x, y);
      } else {
        row.result.t = std::numeric_limits<double>::quiet_NaN();
        row.result.p = std::numeric_limits<double>::quiet_NaN();
        row.result.n = x.size();
      }
      out.push_back(row);
    }
  }
}

}  // namespace

EvaluationResult evaluate_cases(const std::vector<CaseData>& cases, const EvaluationParams& params) {
  EvaluationResult result;
  std::set<std::string> method_names;

  struct CaseOutput {
    std::vector<ImageMetricRow> image_rows;
    std::vector<MethodDiceRow> dice_rows;
    std::vector<std::int32_t> excluded;
    std::size_t empty_crops = 0;
  };
  std::vector<CaseOutput> per_case(cases.size());

  for (std::size_t c = 0; c < cases.size(); ++c) {
    const CaseData& cd = cases[c];
    for (const auto& [name, vol] : cd.methods) {
      method_names.insert(name);
      if (!vol.geometry().same_grid(cd.reference_ct.geometry())) {
        fail(Errc::kGeometryMismatch, "evaluate: method '" + name + "' of case '" + cd.id +
                                          "' is not on the reference grid");
      }
    }
    if (!cd.labels.geometry().same_grid(cd.reference_ct.geometry()) ||
        (cd.subregions && !cd.subregions->geometry().same_grid(cd.reference_ct.geometry()))) {
      fail(Errc::kGeometryMismatch, "evaluate: labels of case '" + cd.id + "' are not on the reference grid");
    }
  }

  for (std::size_t c = 0; c < cases.size(); ++c) {
    const CaseData& cd = cases[c];
    CaseOutput& co = per_case[c];
    const Exclusion ex = exclude_unsupported(cd.labels, params.exclusion);
    co.excluded = ex.excluded;
    const std::set<std::int32_t> excluded(ex.excluded.begin(), ex.excluded.end());
    const Volume ref = normalize_ct(cd.reference_ct);
    std::map<std::string, Volume> synth;
    for (const auto& [name, vol] : cd.methods) synth.emplace(name, normalize_ct(vol));

    // Image metrics: one crop per labeled sagittal slice.
    const auto slices = slice_sagittal(ref, ex.labels);
    std::vector<std::vector<ImageMetricRow>> slice_rows(slices.size());
    const std::uint64_t case_seed = derive_seed(params.seed, c);
    parallel_for(slices.size(), params.jobs, [&](std::size_t s) {
      const SagittalSlice& sl = slices[s];
      Rng rng(derive_seed(case_seed, static_cast<std::uint64_t>(sl.index)));
      const int size = params.crop;
      Window2 placed;
      const Image2D ref_m = pad_to_size(spine_mask(sl.image, sl.labels, params.mask_radius), size, size, 0.0f, &placed);
      const Window2 w = random_window(ref_m.rows, ref_m.cols, size, size, rng);
      // Crops that miss the masked spine entirely carry no signal.
      const Image2D support = crop(
          pad_to_size(spine_mask(Image2D(sl.image.rows, sl.image.cols, 1.0f), sl.labels, params.mask_radius), size,
                      size, 0.0f, nullptr),
          w);
      if (std::none_of(support.data.begin(), support.data.end(), [](float v) { return v != 0.0f; })) return;
      const Image2D a = crop(ref_m, w);
      for (const auto& [name, vol] : synth) {
        const Image2D syn = sagittal_image(vol, sl.index);
        const Image2D b = crop(pad_to_size(spine_mask(syn, sl.labels, params.mask_radius), size, size, 0.0f, nullptr), w);
        ImageMetricRow row;
        row.method = name;
        row.volume_id = cd.id;
        row.crop_id = sl.index;
        row.l1 = l1(a, b);
        row.mse = mse(a, b);
        row.psnr_db = psnr_from_mse(row.mse, 1.0);
        row.ssim = ssim(a, b, 2.0);
        row.vifp = vifp(to_byte_range(a), to_byte_range(b));
        slice_rows[s].push_back(row);
      }
    });
    for (auto& rows : slice_rows) {
      if (rows.empty()) ++co.empty_crops;
      for (auto& r : rows) co.image_rows.push_back(std::move(r));
    }

    // Dice of the threshold segmentation per method.
    std::vector<std::string> names;
    for (const auto& [name, vol] : cd.methods) names.push_back(name);
    std::vector<std::vector<DiceRow>> dice(names.size());
    parallel_for(names.size(), params.jobs, [&](std::size_t m) {
      const Segmented seg = segment_for_dice(cd.methods.at(names[m]), ex.labels, params.segment, excluded);
      LabelVolume ref_sub;
      if (cd.subregions) {
        ref_sub = *cd.subregions;
        for (std::size_t n = 0; n < ref_sub.size(); ++n) {
          if (ex.labels.data()[n] == 0) ref_sub.data()[n] = kBackground;
        }
      }
      dice[m] = dice_rows(ex.labels, seg.labels, cd.id, cd.subregions ? &ref_sub : nullptr,
                          cd.subregions ? &seg.subregions : nullptr);
    });
    for (std::size_t m = 0; m < names.size(); ++m) {
      for (auto& r : dice[m]) co.dice_rows.push_back({names[m], std::move(r)});
    }
  }

  for (std::size_t c = 0; c < cases.size(); ++c) {
    auto& co = per_case[c];
    result.image_rows.insert(result.image_rows.end(), co.image_rows.begin(), co.image_rows.end());
    result.dice_rows.insert(result.dice_rows.end(), co.dice_rows.begin(), co.dice_rows.end());
    result.excluded[cases[c].id] = co.excluded;
    result.empty_crops[cases[c].id] = co.empty_crops;
  }
  std::stable_sort(result.image_rows.begin(), result.image_rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.method, a.volume_id, a.crop_id) < std::tie(b.method, b.volume_id, b.crop_id);
  });
  std::stable_sort(result.dice_rows.begin(), result.dice_rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.method, a.row.volume_id, a.row.subset, a.row.vertebra_id) <
           std::tie(b.method, b.row.volume_id, b.row.subset, b.row.vertebra_id);
  });

  // Paired t-tests between methods.
  using Values = std::map<std::string, std::map<std::string, double>>;
  const char* image_metrics[] = {"l1", "mse", "psnr_db", "ssim", "vifp"};
  for (int mi = 0; mi < 5; ++mi) {
    Values values;
    for (const auto& name : method_names) values[name];
    for (const auto& r : result.image_rows) {
      const double v = mi == 0 ? r.l1 : mi == 1 ? r.mse : mi == 2 ? r.psnr_db : mi == 3 ? r.ssim : r.vifp;
      values[r.method][r.volume_id + "/" + std::to_string(r.crop_id)] = v;
    }
    add_ttests(image_metrics[mi], values, result.ttests);
  }
  for (DiceSubset subset : {DiceSubset::kAll, DiceSubset::kPosterior}) {
    Values values;
    for (const auto& name : method_names) values[name];
    for (const auto& r : result.dice_rows) {
      if (r.row.subset != subset) continue;
      values[r.method][r.row.volume_id + "/" + std::to_string(r.row.vertebra_id)] = r.row.dice;
    }
    add_ttests(std::string("dice_") + dice_subset_name(subset), values, result.ttests);
  }

  // Aggregates.
  json methods = json::object();
  for (const auto& name : method_names) {
    std::vector<double> v_l1, v_mse, v_psnr, v_ssim, v_vifp;
    for (const auto& r : result.image_rows) {
      if (r.method != name) continue;
      v_l1.push_back(r.l1);
      v_mse.push_back(r.mse);
      v_psnr.push_back(r.psnr_db);
      v_ssim.push_back(r.ssim);
      v_vifp.push_back(r.vifp);
    }
    std::vector<DiceRow> drows;
    for (const auto& r : result.dice_rows) {
      if (r.method == name) drows.push_back(r.row);
    }
    const double mean_mse = mean_of(v_mse);
    methods[name] = {
        {"n_crops", v_l1.size()},
        {"l1", json_double(mean_of(v_l1))},
        {"mse", json_double(mean_mse)},
        {"psnr_db", json_double(mean_of(v_psnr))},
        {"psnr_of_mean_mse_db", json_double(v_mse.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                          : psnr_from_mse(mean_mse, 1.0))},
        {"ssim", json_double(mean_of(v_ssim))},
        {"vifp", json_double(mean_of(v_vifp))},
        {"dice_per_volume",
         {{"all", json_double(dice_per_volume(drows, DiceSubset::kAll))},
          {"posterior", json_double(dice_per_volume(drows, DiceSubset::kPosterior))}}},
        {"dice_per_vertebra",
         {{"all", json_double(dice_per_vertebra(drows, DiceSubset::kAll))},
          {"posterior", json_double(dice_per_vertebra(drows, DiceSubset::kPosterior))}}},
    };
  }
  json tt = json::array();
  std::map<std::string, std::vector<double>> p_by_metric;
  for (const auto& r : result.ttests) {
    tt.push_back({{"metric", r.metric},
                  {"method_a", r.method_a},
                  {"method_b", r.method_b},
                  {"t", json_double(r.result.t)},
                  {"p", json_double(r.result.p)},
                  {"n", r.result.n}});
    if (std::isfinite(r.result.p)) p_by_metric[r.metric].push_back(r.result.p);
  }
  json worst = json::object();
  for (const auto& [metric, ps] : p_by_metric) worst[metric] = worst_p(ps);
  json excluded = json::object();
  for (const auto& [id, ids] : result.excluded) excluded[id] = ids;
  result.summary = {{"methods", methods},
                    {"ttests", tt},
                    {"worst_p", worst},
                    {"excluded_labels", excluded},
                    {"empty_crops", result.empty_crops},
                    {"settings",
                     {{"mask_radius", params.mask_radius},
                      {"crop", params.crop},
                      {"psnr_peak", 1.0},
                      {"ssim_peak", 2.0},
                      {"vifp_range", json::array({0, 255})}}}};
  return result;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

DenoiserSpec load_denoiser(const DenoiserSection& d, const Geometry& mr_grid) {
  DenoiserSpec spec;
  spec.name = d.name;
  spec.mode = d.mode;
  spec.prior_mean = d.prior_mean;
  spec.prior_variance = d.prior_variance;
  if (d.name == "single-target") {
    spec.target = normalize_ct(nifti::read_volume(d.target, nullptr, IntensitySpace::kHU));
    if (!spec.target->geometry().same_grid(mr_grid)) {
      throw ValidationError("translate.denoiser.target is not on the MR grid", Errc::kGeometryMismatch);
    }
  } else if (d.name == "external") {
    spec.store = std::make_shared<const dif::PredictionStore>(d.predictions_dir);
  }
  return spec;
}

void validate_translate(const PipelineConfig& cfg) {
  const TranslateSection& t = cfg.translate;
  require_file(t.mr, "translate.mr");
  if (t.output.empty()) throw ValidationError("translate.output is not set");
  if (t.denoiser.name == "single-target") {
    require_file(t.denoiser.target, "translate.denoiser.target");
    require_same_grid(t.mr, t.denoiser.target, "translate.denoiser.target");
  }
  if (t.denoiser.name == "external") {
    if (!std::filesystem::is_directory(t.denoiser.predictions_dir)) {
      throw ValidationError("translate.denoiser.predictions_dir not found: " + t.denoiser.predictions_dir.string(),
                            Errc::kIoFailure);
    }
  }
  if (t.sampler.guidance_w > 0.0 && t.denoiser.name == "gaussian") {
    throw ValidationError("the gaussian denoiser has no unconditioned mode; use w = 0",
                          Errc::kUnconditionedUnsupported);
  }
}

CaseData load_case(const EvalCase& c, bool with_methods) {
  CaseData cd;
  cd.id = c.id;
  cd.reference_ct = nifti::read_volume(c.reference_ct, nullptr, IntensitySpace::kHU);
  cd.labels = nifti::read_labels(c.labels);
  if (!c.subregions.empty()) {
    cd.subregions = nifti::read_labels(c.subregions);
    cd.subregions->set_kind(LabelKind::kSubregion);
  }
  if (with_methods) {
    for (const auto& [name, path] : c.methods) cd.methods.emplace(name, nifti::read_volume(path, nullptr, IntensitySpace::kHU));
  }
  return cd;
}

void validate_case(const EvalCase& c, const std::string& where, bool with_methods) {
  require_file(c.reference_ct, where + ".reference_ct");
  require_file(c.labels, where + ".labels");
  require_same_grid(c.reference_ct, c.labels, where + ".labels");
  if (!c.subregions.empty()) {
    require_file(c.subregions, where + ".subregions");
    require_same_grid(c.reference_ct, c.subregions, where + ".subregions");
  }
  if (with_methods) {
    if (c.methods.empty()) throw ValidationError(where + ".methods is empty");
    for (const auto& [name, path] : c.methods) {
      require_file(path, where + ".methods." + name);
      require_same_grid(c.reference_ct, path, where + ".methods." + name);
    }
  }
}

EvaluationParams evaluation_params(const PipelineConfig& cfg) {
  EvaluationParams p;
  p.mask_radius = cfg.evaluate.mask_radius;
  p.crop = cfg.evaluate.crop;
  p.exclusion = cfg.evaluate.exclusion;
  p.segment = cfg.segment.params;
  p.seed = cfg.seed;
  p.jobs = cfg.jobs;
  return p;
}

void write_evaluation(const EvaluationResult& r, const Path& dir) {
  write_text_atomic(dir / "image_metrics.csv", image_metrics_csv(r.image_rows));
  write_text_atomic(dir / "dice.csv", dice_csv(r.dice_rows));
  write_text_atomic(dir / "ttest.csv", ttest_csv(r.ttests));
  write_json(dir / "summary.json", r.summary);
}

}  // namespace

json cmd_phantom(const PipelineConfig& cfg) {
  const PhantomSection& p = cfg.phantom;
  const Phantom ph = generate_phantom(p.shape);
  const Vec3 center = 0.5 * (phantom_body_center(p.shape, 1) + phantom_body_center(p.shape, p.shape.n_vertebrae));
  const RigidTransform motion = RigidTransform::about_axis(p.rotation_axis.normalized(),
                                                           p.rotation_deg * std::numbers::pi / 180.0, center,
                                                           p.translation);
  MisalignSpec spec;
  spec.global = motion;
  const Misaligned moved = misalign(ph.ct, ph.labels, &ph.subregions, spec);

  // MR landmarks: ground-truth centroids plus simulated picking error.
  const LandmarkSet truth = extract_centroids(ph.labels, &ph.subregions);
  std::vector<Landmark> picked = truth.entries();
  if (p.landmark_noise_mm > 0.0) {
    Rng rng(derive_seed(cfg.seed, 101));
    std::normal_distribution<double> noise(0.0, p.landmark_noise_mm);
    for (auto& l : picked) {
      for (int a = 0; a < 3; ++a) l.body[a] += noise(rng);
      if (l.spinous) {
        for (int a = 0; a < 3; ++a) (*l.spinous)[a] += noise(rng);
      }
    }
  }

  const Path& dir = p.output_dir;
  std::filesystem::create_directories(dir);
  nifti::write_volume(ph.mr, dir / "mr.nii.gz");
  nifti::write_volume(ph.ct, dir / "ct.nii.gz");
  nifti::write_labels(ph.labels, dir / "labels.nii.gz");
  nifti::write_labels(ph.subregions, dir / "subregions.nii.gz");
  nifti::write_volume(moved.ct, dir / "moving_ct.nii.gz");
  nifti::write_labels(moved.labels, dir / "moving_labels.nii.gz");
  nifti::write_labels(moved.subregions, dir / "moving_subregions.nii.gz");
  write_landmarks(LandmarkSet(picked), dir / "mr_landmarks.txt");
  json info = {{"seed", cfg.seed},
               {"dims", ph.mr.dims()},
               {"spacing_mm", p.shape.spacing},
               {"n_vertebrae", p.shape.n_vertebrae},
               {"ct_motion", transform_json(motion)},
               {"landmark_noise_mm", p.landmark_noise_mm}};
  write_json(dir / "phantom.json", info);
  return {{"command", "phantom"}, {"output_dir", dir.string()}};
}

json cmd_register(const PipelineConfig& cfg) {
  const RegisterSection& r = cfg.reg;
  require_file(r.ct, "register.ct");
  require_file(r.mr, "register.mr");
  if (r.output_dir.empty()) throw ValidationError("register.output_dir is not set");
  const Path& dir = r.output_dir;

  if (r.mode == RegistrationMode::kNone) {
    std::filesystem::create_directories(dir);
    auto copy = [&](const Path& src, const std::string& stem) {
      if (src.empty()) return;
      require_file(src, "register input");
      const std::string ext = src.string().ends_with(".gz") ? ".nii.gz" : ".nii";
      std::filesystem::copy_file(src, dir / (stem + ext), std::filesystem::copy_options::overwrite_existing);
    };
    copy(r.ct, "aligned_ct");
    copy(r.ct_labels, "aligned_labels");
    copy(r.ct_subregions, "aligned_subregions");
    write_json(dir / "fit_report.json", {{"mode", "none"}, {"rms_mm", nullptr}, {"collinear", false},
                                         {"transform", transform_json(RigidTransform{})}});
    return {{"command", "register"}, {"mode", "none"}, {"output_dir", dir.string()}};
  }

  // Validation: inputs and landmark completeness before any output.
  require_file(r.mr_landmarks, "register.mr_landmarks");
  if (r.ct_landmarks.empty()) require_file(r.ct_labels, "register.ct_labels");
  if (!r.ct_labels.empty()) {
    require_file(r.ct_labels, "register.ct_labels");
    require_same_grid(r.ct, r.ct_labels, "register.ct_labels");
  }
  if (!r.ct_subregions.empty()) {
    require_file(r.ct_subregions, "register.ct_subregions");
    require_same_grid(r.ct, r.ct_subregions, "register.ct_subregions");
  }
  const LandmarkSet mr_landmarks = read_landmarks(r.mr_landmarks);
  std::optional<LabelVolume> ct_labels, ct_sub;
  if (!r.ct_labels.empty()) ct_labels = nifti::read_labels(r.ct_labels);
  if (!r.ct_subregions.empty()) {
    ct_sub = nifti::read_labels(r.ct_subregions);
    ct_sub->set_kind(LabelKind::kSubregion);
  }
  const LandmarkSet ct_landmarks = !r.ct_landmarks.empty()
                                       ? read_landmarks(r.ct_landmarks)
                                       : extract_centroids(*ct_labels, ct_sub ? &*ct_sub : nullptr);
  if (r.mode == RegistrationMode::kTwoPoint) {
    if (!mr_landmarks.has_all_spinous()) {
      throw ValidationError("two-point registration needs spinous landmarks in " + r.mr_landmarks.string(),
                            Errc::kMissingSpinous);
    }
    if (!ct_landmarks.has_all_spinous()) {
      throw ValidationError("two-point registration needs CT spinous landmarks (set register.ct_subregions)",
                            Errc::kMissingSpinous);
    }
  }

  const FitReport fit = fit_rigid(ct_landmarks, mr_landmarks, r.mode);
  const Geometry mr_grid = header_geometry(r.mr);
  const Volume ct = nifti::read_volume(r.ct, nullptr, IntensitySpace::kHU);
  const Volume aligned = apply_rigid(ct, fit.transform, mr_grid);

  std::filesystem::create_directories(dir);
  nifti::write_volume(aligned, dir / "aligned_ct.nii.gz");
  if (ct_labels) nifti::write_labels(apply_rigid(*ct_labels, fit.transform, mr_grid), dir / "aligned_labels.nii.gz");
  if (ct_sub) nifti::write_labels(apply_rigid(*ct_sub, fit.transform, mr_grid), dir / "aligned_subregions.nii.gz");
  write_landmarks(ct_landmarks, dir / "ct_landmarks.txt");
  write_landmarks(ct_landmarks.transformed(fit.transform), dir / "ct_landmarks_aligned.txt");
  json report = {{"mode", registration_mode_name(r.mode)},
                 {"rms_mm", fit.rms},
                 {"collinear", fit.collinear},
                 {"n_points", fit.n_points},
                 {"matched_ids", fit.matched_ids},
                 {"singular_values", vec_json(fit.singular_values)},
                 {"transform", transform_json(fit.transform)}};
  write_json(dir / "fit_report.json", report);
  return {{"command", "register"}, {"mode", registration_mode_name(r.mode)}, {"rms_mm", fit.rms},
          {"collinear", fit.collinear}, {"output_dir", dir.string()}};
}

json cmd_segment(const PipelineConfig& cfg) {
  const SegmentSection& s = cfg.segment;
  require_file(s.ct, "segment.ct");
  const Volume ct = nifti::read_volume(s.ct, nullptr, IntensitySpace::kHU);
  Segmentation seg = threshold_segment(ct, s.params);
  std::vector<std::int32_t> excluded;
  if (s.exclude) {
    Exclusion ex = exclude_unsupported(seg.labels, s.exclusion);
    excluded = ex.excluded;
    seg.labels = std::move(ex.labels);
    for (std::size_t n = 0; n < seg.labels.size(); ++n) {
      if (seg.labels.data()[n] == 0) seg.subregions.data()[n] = kBackground;
    }
  }
  const Path& dir = s.output_dir;
  std::filesystem::create_directories(dir);
  nifti::write_labels(seg.labels, dir / "labels.nii.gz");
  nifti::write_labels(seg.subregions, dir / "subregions.nii.gz");
  const auto ids = seg.labels.labels();
  if (!ids.empty()) write_landmarks(regenerate_landmarks(seg.labels, seg.subregions), dir / "landmarks.txt");
  json info = {{"n_labels", ids.size()}, {"labels", std::vector<std::int32_t>(ids.begin(), ids.end())},
               {"excluded", excluded}};
  write_json(dir / "segment.json", info);
  return {{"command", "segment"}, {"n_labels", ids.size()}, {"output_dir", dir.string()}};
}

json cmd_translate(const PipelineConfig& cfg) {
  validate_translate(cfg);
  const TranslateSection& t = cfg.translate;
  nifti::Header mr_header;
  const Volume mr = nifti::read_volume(t.mr, &mr_header, IntensitySpace::kMRRaw);
  const DenoiserSpec spec = load_denoiser(t.denoiser, mr.geometry());
  const Volume synth = denormalize_ct(translate_volume(mr, spec, translate_options(cfg)));
  nifti::write_volume(synth, t.output);
  return {{"command", "translate"}, {"recipe", recipe_name(t.recipe)}, {"output", t.output.string()}};
}

json cmd_evaluate(const PipelineConfig& cfg) {
  const EvaluateSection& e = cfg.evaluate;
  if (e.cases.empty()) throw ValidationError("evaluate.cases is empty");
  for (std::size_t c = 0; c < e.cases.size(); ++c) {
    validate_case(e.cases[c], "evaluate.cases." + std::to_string(c), true);
  }
  std::vector<CaseData> cases;
  for (const auto& c : e.cases) cases.push_back(load_case(c, true));
  const EvaluationResult r = evaluate_cases(cases, evaluation_params(cfg));
  write_evaluation(r, e.output_dir);
  return {{"command", "evaluate"}, {"n_cases", cases.size()}, {"output_dir", e.output_dir.string()}};
}

json cmd_ablate(const PipelineConfig& cfg) {
  const AblateSection& a = cfg.ablate;
  validate_translate(cfg);
  validate_case(a.reference, "ablate.reference", false);
  require_same_grid(cfg.translate.mr, a.reference.reference_ct, "ablate.reference.reference_ct");

  const Volume mr = nifti::read_volume(cfg.translate.mr, nullptr, IntensitySpace::kMRRaw);
  const DenoiserSpec spec = load_denoiser(cfg.translate.denoiser, mr.geometry());
  CaseData base = load_case(a.reference, false);

  std::string csv = "steps,eta,w,l1,mse,psnr_db,psnr_of_mean_mse_db,ssim,vifp,dice_all,dice_posterior\n";
  json cells = json::array();
  for (int steps : a.steps) {
    for (double eta : a.eta) {
      for (double w : a.w) {
        TranslateOptions opt = translate_options(cfg);
        opt.sampler.steps = steps;
        opt.sampler.eta = eta;
        opt.sampler.guidance_w = w;
        const Volume synth = denormalize_ct(translate_volume(mr, spec, opt));
        const std::string name = "steps" + std::to_string(steps) + "_eta" + format_double(eta) + "_w" + format_double(w);
        const Path cell_dir = a.output_dir / name;
        nifti::write_volume(synth, cell_dir / "synth_ct.nii.gz");

        CaseData cd = base;
        cd.methods.emplace("cell", synth);
        const EvaluationResult r = evaluate_cases({cd}, evaluation_params(cfg));
        write_evaluation(r, cell_dir);
        const json& m = r.summary["methods"]["cell"];
        auto num = [](const json& v) {
          return v.is_string() ? parse_double(v.get<std::string>()) : v.get<double>();
        };
        csv += std::to_string(steps) + "," + format_double(eta) + "," + format_double(w) + "," +
               format_double(num(m["l1"])) + "," + format_double(num(m["mse"])) + "," +
               format_double(num(m["psnr_db"])) + "," + format_double(num(m["psnr_of_mean_mse_db"])) + "," +
               format_double(num(m["ssim"])) + "," + format_double(num(m["vifp"])) + "," +
               format_double(num(m["dice_per_vertebra"]["all"])) + "," +
               format_double(num(m["dice_per_vertebra"]["posterior"])) + "\n";
        json cell = m;
        cell["steps"] = steps;
        cell["eta"] = eta;
        cell["w"] = w;
        cells.push_back(cell);
      }
    }
  }
  write_text_atomic(a.output_dir / "ablation.csv", csv);
  write_json(a.output_dir / "ablation.json", {{"cells", cells}});
  return {{"command", "ablate"}, {"n_cells", cells.size()}, {"output_dir", a.output_dir.string()}};
}

json run_command(const std::string& command, const PipelineConfig& cfg) {
  if (command == "phantom") return cmd_phantom(cfg);
  if (command == "register") return cmd_register(cfg);
  if (command == "segment") return cmd_segment(cfg);
  if (command == "translate") return cmd_translate(cfg);
  if (command == "evaluate") return cmd_evaluate(cfg);
  if (command == "ablate") return cmd_ablate(cfg);
  throw ValidationError("unknown command '" + command + "'");
}

namespace {

void print_error(std::ostream& err, const char* kind, const std::string& code, const std::string& message,
                 int exit_code) {
  json j = {{"error", {{"kind", kind}, {"code", code}, {"message", message}}}, {"exit_code", exit_code}};
  err << j.dump() << std::endl;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MR to CT translation pipeline"};
  app.name(args.empty() ? "mr2ct" : args.front());
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "YAML config file");
  app.add_option("--set", overrides, "Override a config key: dotted.key=value (repeatable)")
      ->expected(1)
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--jobs", jobs, "Worker threads");
  app.add_option("--seed", seed, "Base seed (overrides config)");

  const std::pair<const char*, const char*> commands[] = {
      {"phantom", "Generate a paired MR/CT phantom with labels"},
      {"register", "Landmark-based rigid registration of CT onto MR"},
      {"segment", "Threshold segmentation of a CT volume"},
      {"translate", "Translate MR to synthetic CT with the diffusion sampler"},
      {"evaluate", "Image metrics, Dice and paired t-tests"},
      {"ablate", "Sampler parameter sweep"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<std::string> argv_rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "validation", "usage", e.what(), 2);
    return 2;
  }

  try {
    std::string command;
    for (const auto* sub : app.get_subcommands()) command = sub->get_name();
    ConfigSources sources;
    if (!config_path.empty()) sources.file = config_path;
    sources.overrides = overrides;
    sources.jobs = jobs;
    sources.seed = seed;
    const PipelineConfig cfg = load_config(sources);
    const json summary = run_command(command, cfg);
    out << summary.dump() << std::endl;
    return 0;
  } catch (const ValidationError& e) {
    print_error(err, "validation", e.name(), e.what(), 2);
    return 2;
  } catch (const Error& e) {
    print_error(err, "runtime", e.name(), e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "runtime", "internal", e.what(), 1);
    return 1;
  }
}

}  // namespace mr2ct
