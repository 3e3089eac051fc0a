#include "mr2ct/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace mr2ct {
namespace {

[[noreturn]] void invalid(const std::string& what) { throw ValidationError(what); }

// Reads typed values from one mapping node and rejects keys nobody asked for.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) invalid("config section '" + name_ + "' must be a mapping");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return present() && node_[key] && !node_[key].IsNull();
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      invalid("config key '" + where(key) + "' has the wrong type");
    }
  }

  void get(const std::string& key, Path& out) {
    std::string s;
    get(key, s);
    if (has(key)) out = s;
  }

  void get(const std::string& key, Vec3& out) {
    std::vector<double> v;
    get(key, v);
    if (!has(key)) return;
    if (v.size() != 3) invalid("config key '" + where(key) + "' needs 3 values");
    out = Vec3(v[0], v[1], v[2]);
  }

  void get(const std::string& key, Index3& out) {
    std::vector<int> v;
    get(key, v);
    if (!has(key)) return;
    if (v.size() != 3) invalid("config key '" + where(key) + "' needs 3 values");
    out = {v[0], v[1], v[2]};
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(present() ? node_[key] : YAML::Node(), name_.empty() ? key : name_ + "." + key);
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return present() ? node_[key] : YAML::Node();
  }

  std::string where(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    if (!present()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) invalid("unknown config key '" + where(key) + "'");
    }
  }

 private:
  bool present() const { return node_ && node_.IsMap(); }

  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) invalid("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  YAML::Node value;
  try {
    value = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    invalid("--set " + key + ": cannot parse value '" + text + "'");
  }
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) invalid("--set: empty component in key '" + key + "'");
    parts.push_back(part);
  }
  YAML::Node cur = root;
  for (std::size_t n = 0; n + 1 < parts.size(); ++n) {
    YAML::Node next;
    if (cur.IsSequence()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(parts[n]);
      } catch (const std::exception&) {
        invalid("--set: '" + parts[n] + "' is not a list index in '" + key + "'");
      }
      if (idx >= cur.size()) invalid("--set: index " + parts[n] + " out of range in '" + key + "'");
      next = cur[idx];
    } else {
      if (!cur[parts[n]] || cur[parts[n]].IsNull()) cur[parts[n]] = YAML::Node(YAML::NodeType::Map);
      next = cur[parts[n]];
    }
    cur.reset(next);
  }
  if (cur.IsSequence()) {
    std::size_t idx = 0;
    try {
      idx = std::stoul(parts.back());
    } catch (const std::exception&) {
      invalid("--set: '" + parts.back() + "' is not a list index in '" + key + "'");
    }
    if (idx >= cur.size()) invalid("--set: index out of range in '" + key + "'");
    cur[idx] = value;
  } else {
    cur[parts.back()] = value;
  }
}

void read_exclusion(Section sec, ExclusionRules& rules) {
  std::vector<int> sacrum;
  sec.get("sacrum_labels", sacrum);
  rules.sacrum_labels = std::set<std::int32_t>(sacrum.begin(), sacrum.end());
  sec.get("max_clipped_fraction", rules.max_clipped_fraction);
  sec.finish();
  if (!(rules.max_clipped_fraction >= 0.0 && rules.max_clipped_fraction <= 1.0)) {
    invalid(sec.where("max_clipped_fraction") + " must lie in [0, 1]");
  }
}

EvalCase read_case(Section sec, bool with_methods) {
  EvalCase c;
  sec.get("id", c.id);
  sec.get("reference_ct", c.reference_ct);
  sec.get("labels", c.labels);
  sec.get("subregions", c.subregions);
  if (with_methods) {
    std::map<std::string, std::string> methods;
    sec.get("methods", methods);
    for (const auto& [name, path] : methods) c.methods[name] = path;
  }
  sec.finish();
  if (c.id.empty()) c.id = "case";
  if (c.id.find_first_of(",\n\"") != std::string::npos) invalid("case id '" + c.id + "' contains reserved characters");
  return c;
}

void validate_sampler(const TranslateSection& t, const diffusion::SamplerConfig& s, const std::string& where) {
  if (s.steps < 1 || s.steps > t.T) invalid(where + ".steps must lie in [1, T=" + std::to_string(t.T) + "]");
  if (!(s.eta >= 0.0 && s.eta <= 1.0)) invalid(where + ".eta must lie in [0, 1]");
  if (!(s.guidance_w >= 0.0)) invalid(where + ".w must be >= 0");
  if (s.scheduler == diffusion::Scheduler::kDdpm && s.steps != t.T) {
    invalid(where + ": the ddpm scheduler needs steps = T");
  }
}

PipelineConfig build(YAML::Node root, const ConfigSources& sources) {
  for (const auto& o : sources.overrides) apply_override(root, o);
  PipelineConfig cfg;
  Section top(root, "");

  bool have_seed = false;
  if (top.has("seed")) {
    long long seed = 0;
    top.get("seed", seed);
    if (seed < 0) invalid("seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(seed);
    have_seed = true;
  }
  if (sources.seed) {
    cfg.seed = *sources.seed;
    have_seed = true;
  }
  if (!have_seed) invalid("a seed is required (config 'seed' or --seed)");
  top.get("jobs", cfg.jobs);
  if (sources.jobs) cfg.jobs = *sources.jobs;
  if (cfg.jobs < 1) invalid("jobs must be >= 1");

  {
    Section s = top.child("phantom");
    PhantomSection& p = cfg.phantom;
    s.get("n_vertebrae", p.shape.n_vertebrae);
    s.get("body_radius", p.shape.body_radius);
    s.get("body_height", p.shape.body_height);
    s.get("disc_gap", p.shape.disc_gap);
    s.get("process_length", p.shape.process_length);
    s.get("process_width", p.shape.process_width);
    s.get("curvature", p.shape.curvature);
    s.get("noise_sigma", p.shape.noise_sigma);
    s.get("spacing", p.shape.spacing);
    s.get("rotation_deg", p.rotation_deg);
    s.get("rotation_axis", p.rotation_axis);
    s.get("translation", p.translation);
    s.get("landmark_noise_mm", p.landmark_noise_mm);
    s.get("output_dir", p.output_dir);
    s.finish();
    p.shape.seed = cfg.seed;
    try {
      p.shape.validate();
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      invalid(e.what());
    }
    if (!(p.rotation_axis.norm() > 0.0)) invalid("phantom.rotation_axis must be nonzero");
    if (!(p.landmark_noise_mm >= 0.0)) invalid("phantom.landmark_noise_mm must be >= 0");
  }

  {
    Section s = top.child("register");
    RegisterSection& r = cfg.reg;
    std::string mode = registration_mode_name(r.mode);
    s.get("mode", mode);
    r.mode = parse_registration_mode(mode);
    s.get("mr", r.mr);
    s.get("mr_landmarks", r.mr_landmarks);
    s.get("ct", r.ct);
    s.get("ct_labels", r.ct_labels);
    s.get("ct_subregions", r.ct_subregions);
    s.get("ct_landmarks", r.ct_landmarks);
    s.get("output_dir", r.output_dir);
    s.finish();
  }

  {
    Section s = top.child("segment");
    SegmentSection& g = cfg.segment;
    s.get("ct", g.ct);
    s.get("threshold", g.params.threshold);
    long long min_component = static_cast<long long>(g.params.min_component);
    s.get("min_component", min_component);
    if (min_component < 1) invalid("segment.min_component must be >= 1");
    g.params.min_component = static_cast<std::size_t>(min_component);
    s.get("opening_radius_mm", g.params.opening_radius_mm);
    if (!(g.params.opening_radius_mm >= 0.0)) invalid("segment.opening_radius_mm must be >= 0");
    s.get("exclude", g.exclude);
    read_exclusion(s.child("exclusion"), g.exclusion);
    s.get("output_dir", g.output_dir);
    s.finish();
  }

  {
    Section s = top.child("translate");
    TranslateSection& t = cfg.translate;
    s.get("mr", t.mr);
    s.get("output", t.output);
    std::string recipe = recipe_name(t.recipe);
    s.get("recipe", recipe);
    if (recipe == "2d") {
      t.recipe = Recipe::k2D;
    } else if (recipe == "3d") {
      t.recipe = Recipe::k3D;
    } else {
      invalid("translate.recipe must be 2d or 3d, got '" + recipe + "'");
    }
    s.get("T", t.T);
    s.get("s", t.s);
    if (t.T < 1) invalid("translate.T must be >= 1");
    if (!(t.s > 0.0)) invalid("translate.s must be > 0");
    s.get("tile", t.tile);
    s.get("patch", t.patch);
    s.get("stride", t.stride);
    s.get("iso_spacing", t.iso_spacing);
    if (t.tile < 1) invalid("translate.tile must be >= 1");
    for (int a = 0; a < 3; ++a) {
      if (t.patch[a] < 1) invalid("translate.patch entries must be >= 1");
      if (t.stride[a] < 0) invalid("translate.stride entries must be >= 0");
    }
    if (!(t.iso_spacing > 0.0)) invalid("translate.iso_spacing must be > 0");

    Section d = s.child("denoiser");
    d.get("name", t.denoiser.name);
    d.get("target", t.denoiser.target);
    d.get("predictions_dir", t.denoiser.predictions_dir);
    std::string dmode = diffusion::prediction_name(t.denoiser.mode);
    d.get("mode", dmode);
    t.denoiser.mode = diffusion::parse_prediction(dmode);
    d.get("prior_mean", t.denoiser.prior_mean);
    d.get("prior_variance", t.denoiser.prior_variance);
    d.finish();
    static const std::set<std::string> kNames{"single-target", "gaussian", "zero", "external"};
    if (!kNames.count(t.denoiser.name)) {
      invalid("translate.denoiser.name must be one of single-target|gaussian|zero|external, got '" +
              t.denoiser.name + "'");
    }
    if (!(t.denoiser.prior_variance >= 0.0)) invalid("translate.denoiser.prior_variance must be >= 0");

    Section sm = s.child("sampler");
    diffusion::SamplerConfig& sc = t.sampler;
    sc.mode = t.denoiser.mode;
    if (sm.has("mode")) {
      std::string smode;
      sm.get("mode", smode);
      if (diffusion::parse_prediction(smode) != t.denoiser.mode) {
        invalid("translate.sampler.mode differs from translate.denoiser.mode");
      }
    }
    sc.steps = t.recipe == Recipe::k2D ? 20 : 25;
    sm.get("steps", sc.steps);
    sm.get("eta", sc.eta);
    sm.get("w", sc.guidance_w);
    sm.get("clamp_x0", sc.clamp_x0);
    std::string scheduler = "ddim";
    sm.get("scheduler", scheduler);
    if (scheduler == "ddim") {
      sc.scheduler = diffusion::Scheduler::kDdim;
    } else if (scheduler == "ddpm") {
      sc.scheduler = diffusion::Scheduler::kDdpm;
    } else {
      invalid("translate.sampler.scheduler must be ddim or ddpm, got '" + scheduler + "'");
    }
    sm.finish();
    validate_sampler(t, sc, "translate.sampler");
    s.finish();
  }

  {
    Section s = top.child("evaluate");
    EvaluateSection& e = cfg.evaluate;
    YAML::Node cases = s.raw("cases");
    if (cases && !cases.IsNull()) {
      if (!cases.IsSequence()) invalid("evaluate.cases must be a list");
      std::set<std::string> ids;
      for (std::size_t n = 0; n < cases.size(); ++n) {
        e.cases.push_back(read_case(Section(cases[n], "evaluate.cases." + std::to_string(n)), true));
        if (!ids.insert(e.cases.back().id).second) invalid("duplicate evaluate case id '" + e.cases.back().id + "'");
        for (const auto& [name, path] : e.cases.back().methods) {
          if (name.empty() || name.find_first_of(",\n\"") != std::string::npos) {
            invalid("method name '" + name + "' is empty or contains reserved characters");
          }
        }
      }
    }
    s.get("mask_radius", e.mask_radius);
    s.get("crop", e.crop);
    read_exclusion(s.child("exclusion"), e.exclusion);
    s.get("output_dir", e.output_dir);
    s.finish();
    if (!(e.mask_radius >= 0.0)) invalid("evaluate.mask_radius must be >= 0");
    if (e.crop < 41) invalid("evaluate.crop must be >= 41 (four VIFp scales)");
  }

  {
    Section s = top.child("ablate");
    AblateSection& a = cfg.ablate;
    s.get("steps", a.steps);
    s.get("eta", a.eta);
    s.get("w", a.w);
    YAML::Node ref = s.raw("reference");
    if (ref && !ref.IsNull()) a.reference = read_case(Section(ref, "ablate.reference"), false);
    s.get("output_dir", a.output_dir);
    s.finish();
    if (a.steps.empty() || a.eta.empty() || a.w.empty()) invalid("ablate grids must be nonempty");
    for (int st : a.steps) {
      diffusion::SamplerConfig probe = cfg.translate.sampler;
      probe.steps = st;
      validate_sampler(cfg.translate, probe, "ablate");
    }
    for (double v : a.eta) {
      if (!(v >= 0.0 && v <= 1.0)) invalid("ablate.eta values must lie in [0, 1]");
    }
    for (double v : a.w) {
      if (!(v >= 0.0)) invalid("ablate.w values must be >= 0");
    }
  }

  top.finish();
  return cfg;
}

}  // namespace

const char* recipe_name(Recipe recipe) { return recipe == Recipe::k2D ? "2d" : "3d"; }

PipelineConfig parse_config(const std::string& yaml_text, const ConfigSources& sources) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    invalid(std::string("cannot parse config: ") + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) invalid("config document must be a mapping");
  return build(root, sources);
}

PipelineConfig load_config(const ConfigSources& sources) {
  std::string text;
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) invalid("cannot read config file " + sources.file->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(text, sources);
}

}  // namespace mr2ct
