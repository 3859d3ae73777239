#include "irseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "irseg/error.hpp"
#include "irseg/parallel.hpp"
#include "irseg/pgm.hpp"

namespace irseg {
namespace {

using json = nlohmann::ordered_json;

constexpr int kModelSchema = 1;
constexpr int kReportSchema = 1;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json hyper_entry_json(const CvCandidate& c) {
  json h = json::object();
  for (const auto& [k, v] : c.hyper) {
    if (k == "clique") h[k] = v == 0 ? "first" : "second";
    else h[k] = v;
  }
  return h;
}

json spec_json(const FeatureSpec& s) {
  return {{"variant", to_string(s.variant)},
          {"neighborhood", to_string(s.neighborhood)},
          {"expansion_order", s.expansion_order},
          {"expansion_bias", s.expansion_bias}};
}

}  // namespace

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (dir.empty() || !std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<TemperatureImage> estimate_window(const std::vector<TemperatureImage>& clear_frames,
                                                const PipelineOptions& opts) {
  ClearSkyBuffer buffer(opts.clear_sky_capacity, opts.persistence);
  for (const auto& f : clear_frames) buffer.update(f, true);
  if (buffer.empty()) return std::nullopt;
  return window_artifact(buffer);
}

FrameBundle build_bundle(const TemperatureImage& frame, const TemperatureImage* previous,
                         const TemperatureImage* window, const PipelineOptions& opts) {
  const QuantileBackground background(opts.background_quantile);
  const auto derived = [&](const TemperatureImage& t, FrameBundle& b) {
    b.t = t;
    b.h = malr_height(t, opts.site);
    b.t_prime = window ? remove_window_artifact(t, *window) : t;
    b.h_prime = malr_height(*b.t_prime, opts.site);
    auto r = background_residual(*b.t_prime, background, opts.site);
    b.intensity = normalize_8bit(r.delta, opts.site);
    b.delta_t = std::move(r.delta);
    b.h_second = std::move(r.height_diff);
  };
  FrameBundle b;
  derived(frame, b);
  if (previous) {
    require_same_shape(frame, *previous, "previous frame");
    FrameBundle p;
    derived(*previous, p);
    b.velocity_magnitude = optical_flow(*p.intensity, *b.intensity, opts.flow).magnitude();
  } else {
    b.velocity_magnitude = Grid<double>(frame.width(), frame.height(), 0.0);
  }
  return b;
}

std::vector<PreparedImage> prepare(const DatasetManifest& manifest, const TemperatureImage* window,
                                   const PipelineOptions& opts) {
  std::vector<PreparedImage> out(manifest.entries.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const auto& e = manifest.entries[i];
    PreparedImage& p = out[i];
    p.name = e.frame.filename().string();
    p.split = e.split;
    p.frame = load_frame(e.frame);
    if (e.previous) p.previous = load_frame(*e.previous);
    p.labels = load_mask(e.labels);
    require_same_shape(p.frame, p.labels, "labels");
    if (window) require_same_shape(p.frame, *window, "window artifact");
    p.bundle = build_bundle(p.frame, p.previous ? &*p.previous : nullptr, window, opts);
  });
  return out;
}

std::vector<PreparedImage> of_split(const std::vector<PreparedImage>& images, Split split) {
  std::vector<PreparedImage> out;
  for (const auto& im : images) {
    if (im.split == split) out.push_back(im);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string ModelFile::to_json() const {
  json j;
  j["schema_version"] = kModelSchema;
  j["pipeline"] = {{"lapse_rate", options.site.lapse_rate},
                   {"tropopause_height", options.site.tropopause_height},
                   {"site_elevation", options.site.site_elevation},
                   {"surface_temperature", options.site.surface_temperature},
                   {"clear_sky_capacity", options.clear_sky_capacity},
                   {"persistence", options.persistence},
                   {"background_quantile", options.background_quantile},
                   {"flow_window", options.flow.window},
                   {"flow_weight_sigma", options.flow.weight_sigma},
                   {"flow_damping", options.flow.damping}};
  if (window) {
    j["window"] = {{"width", window->width()}, {"height", window->height()}, {"values", window->data()}};
  } else {
    j["window"] = nullptr;
  }
  j["model"] = json::parse(model.to_json());
  return j.dump(1) + "\n";
}

ModelFile ModelFile::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw data_error("model.parse", std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kModelSchema) {
      throw data_error("model.schema", "unsupported model file schema version");
    }
    ModelFile f;
    const auto& p = j.at("pipeline");
    f.options.site.lapse_rate = p.at("lapse_rate").get<double>();
    f.options.site.tropopause_height = p.at("tropopause_height").get<double>();
    f.options.site.site_elevation = p.at("site_elevation").get<double>();
    f.options.site.surface_temperature = p.at("surface_temperature").get<double>();
    f.options.site.validate();
    f.options.clear_sky_capacity = p.at("clear_sky_capacity").get<std::size_t>();
    f.options.persistence = p.at("persistence").get<std::size_t>();
    f.options.background_quantile = p.at("background_quantile").get<double>();
    f.options.flow.window = p.at("flow_window").get<int>();
    f.options.flow.weight_sigma = p.at("flow_weight_sigma").get<double>();
    f.options.flow.damping = p.at("flow_damping").get<double>();
    if (!j.at("window").is_null()) {
      const auto& w = j["window"];
      f.window = TemperatureImage(w.at("width").get<std::size_t>(), w.at("height").get<std::size_t>(),
                                  w.at("values").get<std::vector<double>>());
    }
    f.model = Segmenter::from_json(j.at("model").dump());
    return f;
  } catch (const json::exception& e) {
    throw data_error("model.field", std::string("model file is missing or has a malformed field: ") + e.what());
  }
}

ModelFile ModelFile::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw data_error("model.missing", "model file not found: " + path.string());
  return from_json(read_file(path));
}

void ModelFile::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json()); }

FrameBundle ModelFile::bundle(const TemperatureImage& frame, const TemperatureImage* previous) const {
  if (window) require_same_shape(frame, *window, "window artifact");
  return build_bundle(frame, previous, window ? &*window : nullptr, options);
}

// ---------------------------------------------------------------------------

std::vector<std::string> varied_hypers(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGDA:
    case ModelKind::kRR:
    case ModelKind::kGP:
      return {"gamma"};
    case ModelKind::kSVC:
      return {"C"};
    case ModelKind::kMRF:
    case ModelKind::kSaMRF:
      return {"gamma", "beta", "clique"};
    case ModelKind::kIcmMRF:
    case ModelKind::kSaIcmMRF:
      return {"beta", "clique"};
    case ModelKind::kNBC:
    case ModelKind::kGMM:
    case ModelKind::kKMeans:
      return {};
  }
  return {};
}

ModelGrid default_grid(ModelKind kind) {
  ModelGrid g;
  g.kind = kind;
  g.specs = all_feature_specs(1, 1.0);
  g.gammas = log_grid(1e-4, 1e4, 9);
  g.Cs = log_grid(1e-4, 1e4, 9);
  g.betas = {0, 1, 2, 3, 4};
  g.cliques = {CliqueOrder::kFirst};
  if (kind == ModelKind::kIcmMRF || kind == ModelKind::kSaIcmMRF || kind == ModelKind::kGMM) g.base.gamma = 1.0;
  return g;
}

std::vector<CvCandidate> grid_candidates(const ModelGrid& grid) {
  const auto names = varied_hypers(grid.kind);
  std::vector<std::vector<std::pair<std::string, double>>> combos{{}};
  for (const auto& name : names) {
    std::vector<double> values;
    if (name == "gamma") values = grid.gammas;
    else if (name == "C") values = grid.Cs;
    else if (name == "beta") values = grid.betas;
    else {
      for (auto c : grid.cliques) values.push_back(c == CliqueOrder::kFirst ? 0.0 : 1.0);
    }
    if (values.empty()) throw usage_error("grid.empty", "empty grid for hyperparameter '" + name + "'");
    std::vector<std::vector<std::pair<std::string, double>>> next;
    for (const auto& partial : combos) {
      for (double v : values) {
        auto c = partial;
        c.emplace_back(name, v);
        next.push_back(std::move(c));
      }
    }
    combos = std::move(next);
  }
  if (grid.specs.empty()) throw usage_error("grid.empty", "empty feature-spec grid");
  std::vector<CvCandidate> out;
  for (const auto& spec : grid.specs) {
    for (const auto& h : combos) out.push_back({spec, h});
  }
  return out;
}

Hyper candidate_hyper(const ModelGrid& grid, const CvCandidate& c) {
  Hyper h = grid.base;
  for (const auto& [k, v] : c.hyper) {
    if (k == "gamma") h.gamma = v;
    else if (k == "C") h.C = v;
    else if (k == "beta") h.beta = v;
    else if (k == "clique") h.clique = v == 0 ? CliqueOrder::kFirst : CliqueOrder::kSecond;
  }
  return h;
}

FeatureCache::FeatureCache(const std::vector<PreparedImage>& images, const std::vector<FeatureSpec>& specs) {
  for (const auto& s : specs) {
    const auto key = s.label() + fmt::format("@{}", s.expansion_bias);
    if (by_spec_.count(key)) continue;
    // Expansion happens inside the model; the cache keeps raw features.
    std::vector<FeatureMatrix> mats;
    for (const auto& im : images) mats.push_back(assemble(im.bundle, s));
    by_spec_.emplace(key, std::move(mats));
  }
}

const std::vector<FeatureMatrix>& FeatureCache::get(const FeatureSpec& spec) const {
  const auto it = by_spec_.find(spec.label() + fmt::format("@{}", spec.expansion_bias));
  if (it == by_spec_.end()) throw usage_error("features.cache", "feature spec not prepared: " + spec.label());
  return it->second;
}

CvReport cross_validate(const ModelGrid& grid, const std::vector<PreparedImage>& train,
                        std::span<const double> lambda_grid) {
  if (train.size() < 2) throw data_error("cv.folds", "LOO requires >= 2 images");
  const auto candidates = grid_candidates(grid);
  const FeatureCache cache(train, grid.specs);

  const FoldFn fold = [&](const CvCandidate& c, std::size_t held_out) {
    const auto& mats = cache.get(c.spec);
    std::vector<const FeatureMatrix*> xs;
    std::vector<const LabelMask*> ys;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (i == held_out) continue;
      xs.push_back(&mats[i]);
      ys.push_back(&train[i].labels);
    }
    FoldPrediction out;
    const auto& truth = train[held_out].labels.values();
    out.truth.assign(truth.begin(), truth.end());
    auto t0 = std::chrono::steady_clock::now();
    try {
      const auto model = Segmenter::fit(grid.kind, c.spec, candidate_hyper(grid, c), xs, ys);
      out.fit_seconds = seconds_since(t0);
      t0 = std::chrono::steady_clock::now();
      const auto p = model.posterior(mats[held_out]);
      out.predict_seconds = seconds_since(t0);
      out.posterior.assign(p.values().begin(), p.values().end());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumerical && e.code() != "gaussian.singular") throw;
      // An ill-posed grid point scores as an uninformative predictor.
      spdlog::warn("cv: {} fold {}: {} ({})", c.label(), held_out, e.what(), e.code());
      out.posterior.assign(out.truth.size(), 0.5);
    }
    return out;
  };
  return loo_cv(train.size(), candidates, fold, lambda_grid);
}

TrainResult train(const ModelGrid& grid, const std::vector<PreparedImage>& train_images,
                  const std::optional<TemperatureImage>& window, const PipelineOptions& opts,
                  std::span<const double> lambda_grid) {
  if (train_images.empty()) throw data_error("train.empty", "no training images");
  TrainResult result;
  CvCandidate chosen;
  double lambda = 1.0;
  if (train_images.size() >= 2) {
    result.cv = cross_validate(grid, train_images, lambda_grid);
    chosen = result.cv->best().candidate;
    lambda = result.cv->pooled_lambda;
  } else {
    const auto candidates = grid_candidates(grid);
    if (candidates.size() != 1) {
      throw data_error("cv.folds", "LOO requires >= 2 images to choose among grid points");
    }
    chosen = candidates.front();
  }

  const FeatureCache cache(train_images, {chosen.spec});
  const auto& mats = cache.get(chosen.spec);
  std::vector<const FeatureMatrix*> xs;
  std::vector<const LabelMask*> ys;
  for (std::size_t i = 0; i < train_images.size(); ++i) {
    xs.push_back(&mats[i]);
    ys.push_back(&train_images[i].labels);
  }
  Segmenter model = Segmenter::fit(grid.kind, chosen.spec, candidate_hyper(grid, chosen), xs, ys);
  if (!result.cv) {
    std::vector<double> p;
    std::vector<std::uint8_t> y;
    for (std::size_t i = 0; i < mats.size(); ++i) {
      const auto post = model.posterior(mats[i]);
      p.insert(p.end(), post.values().begin(), post.values().end());
      y.insert(y.end(), train_images[i].labels.values().begin(), train_images[i].labels.values().end());
    }
    lambda = tune_lambda(p, y, lambda_grid).lambda;
  }
  model.set_lambda(lambda);
  result.file = ModelFile{std::move(model), opts, window};
  return result;
}

std::vector<ProbabilityMap> posteriors(const Segmenter& model, const std::vector<PreparedImage>& images) {
  std::vector<ProbabilityMap> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    out[i] = model.posterior(assemble(images[i].bundle, model.spec()));
  });
  return out;
}

Evaluation evaluate(const Segmenter& model, const std::vector<PreparedImage>& images) {
  Evaluation ev;
  const auto post = posteriors(model, images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto pred = apply_lambda(post[i], model.lambda());
    const auto cm = confusion(images[i].labels, pred);
    ev.cm.tp += cm.tp;
    ev.cm.fp += cm.fp;
    ev.cm.tn += cm.tn;
    ev.cm.fn += cm.fn;
    if (cm.tp + cm.fn > 0 && cm.tn + cm.fp > 0) ev.per_image_j.emplace_back(j_statistic(cm));
    else ev.per_image_j.emplace_back();
  }
  ev.j = j_statistic(ev.cm);
  return ev;
}

// ---------------------------------------------------------------------------

std::string cv_report_json(const CvReport& r, ModelKind kind) {
  json j;
  j["schema_version"] = kReportSchema;
  j["model"] = to_string(kind);
  j["folds"] = r.folds;
  j["selected"] = r.selected;
  j["selected_label"] = r.best().candidate.label();
  j["pooled_lambda"] = r.pooled_lambda;
  j["pooled_j"] = r.pooled_j;
  j["warnings"] = r.warnings;
  j["entries"] = json::array();
  for (const auto& e : r.entries) {
    json x;
    x["label"] = e.candidate.label();
    x["spec"] = spec_json(e.candidate.spec);
    x["hyper"] = hyper_entry_json(e.candidate);
    x["mean_j"] = e.mean_j;
    x["scored_folds"] = e.scored_folds;
    json fj = json::array(), fl = json::array();
    for (std::size_t f = 0; f < e.fold_j.size(); ++f) {
      if (e.fold_j[f]) {
        fj.push_back(*e.fold_j[f]);
        fl.push_back(e.fold_lambda[f]);
      } else {
        fj.push_back(nullptr);
        fl.push_back(nullptr);
      }
    }
    x["fold_j"] = fj;
    x["fold_lambda"] = fl;
    j["entries"].push_back(x);
  }
  return j.dump(1) + "\n";
}

std::string cv_timing_json(const CvReport& r, ModelKind kind) {
  json j;
  j["schema_version"] = kReportSchema;
  j["model"] = to_string(kind);
  j["entries"] = json::array();
  for (const auto& e : r.entries) {
    j["entries"].push_back({{"label", e.candidate.label()},
                            {"fit_seconds", e.fit_seconds},
                            {"predict_ms_per_frame", 1e3 * e.predict_seconds / static_cast<double>(r.folds)}});
  }
  return j.dump(1) + "\n";
}

std::string cv_report_csv(const CvReport& r, bool with_timing) {
  std::ostringstream os;
  os << "feature_vector,neighborhood,expansion_order,hyper,mean_j" << (with_timing ? ",predict_ms_per_frame" : "")
     << '\n';
  for (const auto& e : r.entries) {
    std::string hyper;
    for (const auto& [k, v] : e.candidate.hyper) {
      if (!hyper.empty()) hyper += ";";
      hyper += k + "=" + (k == "clique" ? (v == 0 ? std::string("first") : std::string("second")) : fmt::format("{:g}", v));
    }
    os << to_string(e.candidate.spec.variant) << ',' << to_string(e.candidate.spec.neighborhood) << ','
       << e.candidate.spec.expansion_order << ',' << hyper << ',' << fmt::format("{:.6f}", e.mean_j);
    if (with_timing) os << ',' << fmt::format("{:.4f}", 1e3 * e.predict_seconds / static_cast<double>(r.folds));
    os << '\n';
  }
  return os.str();
}

}  // namespace irseg
