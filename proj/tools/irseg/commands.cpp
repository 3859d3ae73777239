#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "irseg/ensemble.hpp"
#include "irseg/eval.hpp"
#include "irseg/parallel.hpp"
#include "irseg/pgm.hpp"
#include "render.hpp"

namespace irseg::cli {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return kUsage;
    case ErrorKind::kData:
      return kData;
    case ErrorKind::kNumerical:
      return kNumerical;
  }
  return kData;
}

namespace {

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kNumerical:
      return "numerical";
  }
  return "data";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

// Flags shared by every subcommand plus the ones specific to some of them.
struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  bool verbose = false;

  std::string manifest;
  std::string model_kind;
  std::vector<std::string> models;
  std::vector<std::string> frames;
  std::string previous;
  std::string labels;
  std::string split;
  std::string rule;
  bool png = false;
  int reps = 0;
};

struct Context {
  Config config;
  fs::path config_dir;  // relative config paths resolve here
  fs::path out;
};

Context make_context(const Args& a) {
  Context ctx;
  if (!a.config.empty()) {
    ctx.config = Config::load(a.config);
    ctx.config_dir = fs::absolute(a.config).parent_path();
  } else {
    ctx.config_dir = fs::current_path();
  }
  for (const auto& s : a.sets) ctx.config.set_override(s);
  if (a.seed) {
    ctx.config.set("synth.seed", ConfigScalar(static_cast<double>(*a.seed)));
    ctx.config.set("model.seed", ConfigScalar(static_cast<double>(*a.seed)));
  }
  if (!a.out.empty()) {
    ctx.out = a.out;
  } else if (ctx.config.has("output.dir")) {
    ctx.out = ctx.config_dir / ctx.config.get_string("output.dir", ".");
  } else {
    ctx.out = ".";
  }
  return ctx;
}

fs::path config_path(const Context& ctx, const std::string& key) {
  const auto s = ctx.config.get_string(key, "");
  if (s.empty()) return {};
  return ctx.config_dir / s;
}

fs::path manifest_path(const Args& a, const Context& ctx) {
  fs::path p = a.manifest.empty() ? config_path(ctx, "data.manifest") : fs::path(a.manifest);
  if (p.empty()) throw usage_error("cli.manifest", "no manifest given (--manifest or [data] manifest)");
  if (!fs::exists(p)) throw data_error("cli.manifest", "manifest not found: " + p.string());
  return p;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw data_error("cli.output", "cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  if (s == "all") return std::nullopt;
  throw usage_error("cli.split", "split must be train, test or all: " + s);
}

json latency_json(const LatencyStats& s) {
  return json{{"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"min_ms", s.min_ms}, {"samples", s.samples}};
}

// ---------------------------------------------------------------------------
// Frames for the inference commands

struct LoadedFrame {
  std::string name;
  Split split = Split::kTest;
  TemperatureImage frame;
  std::optional<TemperatureImage> previous;
  std::optional<LabelMask> labels;
};

std::vector<LoadedFrame> load_manifest_frames(const fs::path& manifest, const SiteParams& site,
                                              std::optional<Split> split) {
  const auto m = load_manifest(manifest, site);
  std::vector<LoadedFrame> out;
  for (const auto& e : m.entries) {
    if (split && e.split != *split) continue;
    LoadedFrame f;
    f.name = e.frame.stem().string();
    f.split = e.split;
    f.frame = load_frame(e.frame);
    if (e.previous) f.previous = load_frame(*e.previous);
    f.labels = load_mask(e.labels);
    require_same_shape(f.frame, *f.labels, e.labels.string().c_str());
    out.push_back(std::move(f));
  }
  if (out.empty()) throw data_error("cli.no_frames", "manifest has no frames in the requested split");
  return out;
}

std::vector<LoadedFrame> frames_from_args(const Args& a, const Context& ctx, const SiteParams& site,
                                          const std::string& default_split) {
  if (!a.frames.empty()) {
    if (a.frames.size() > 1 && (!a.previous.empty() || !a.labels.empty())) {
      throw usage_error("cli.frames", "--previous and --labels apply to a single --frame");
    }
    std::vector<LoadedFrame> out;
    for (const auto& p : a.frames) {
      LoadedFrame f;
      f.name = fs::path(p).stem().string();
      f.frame = load_frame(p);
      if (!a.previous.empty()) f.previous = load_frame(a.previous);
      if (!a.labels.empty()) {
        f.labels = load_mask(a.labels);
        require_same_shape(f.frame, *f.labels, "labels");
      }
      out.push_back(std::move(f));
    }
    return out;
  }
  const auto split = a.split.empty() ? ctx.config.get_string("segment.split", default_split) : a.split;
  return load_manifest_frames(manifest_path(a, ctx), site, parse_split(split));
}

FeatureMatrix features_of(const ModelFile& m, const LoadedFrame& f) {
  return assemble(m.bundle(f.frame, f.previous ? &*f.previous : nullptr), m.model.spec());
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const Args& a) {
  const auto ctx = make_context(a);
  const auto site = pipeline_options(ctx.config).site;
  const auto sc = scene_config(ctx.config);
  sc.validate(site);
  const auto scene = generate(sc);
  ensure_dir(ctx.out);
  const auto manifest = write_dataset(scene, sc, ctx.out);
  std::vector<LabelMask> masks;
  for (const auto& f : scene.frames) masks.push_back(f.mask);
  const auto cov = coverage(masks);
  std::ostringstream cs;
  for (std::size_t i = 0; i < cov.size(); ++i) cs << (i ? " " : "") << std::fixed << std::setprecision(2) << cov[i];
  spdlog::info("synth: {} frames, coverage {}", scene.frames.size(), cs.str());
  std::cout << manifest.string() << "\n";
  return kOk;
}

struct TrainingData {
  std::vector<PreparedImage> images;
  std::optional<TemperatureImage> window;
  PipelineOptions opts;
};

TrainingData load_training(const Args& a, const Context& ctx) {
  TrainingData d;
  d.opts = pipeline_options(ctx.config);
  const auto mpath = manifest_path(a, ctx);
  const auto manifest = load_manifest(mpath, d.opts.site);

  // A manifest given on the command line brings its own clear_sky/ sibling.
  fs::path clear = a.manifest.empty() ? config_path(ctx, "data.clear_sky") : fs::path();
  if (clear.empty() && fs::is_directory(mpath.parent_path() / "clear_sky")) clear = mpath.parent_path() / "clear_sky";
  if (!clear.empty() && !fs::is_directory(clear)) {
    throw data_error("cli.clear_sky", "clear-sky directory not found: " + clear.string());
  }
  std::vector<TemperatureImage> clear_frames;
  for (const auto& p : list_frames(clear)) clear_frames.push_back(load_frame(p));
  d.window = estimate_window(clear_frames, d.opts);
  if (!d.window) spdlog::info("no clear-sky frames; window artifact removal disabled");
  d.images = prepare(manifest, d.window ? &*d.window : nullptr, d.opts);
  return d;
}

void write_cv_outputs(const fs::path& out, const CvReport& cv, ModelKind kind) {
  write_file_atomic(out / "cv_report.json", cv_report_json(cv, kind));
  write_file_atomic(out / "cv_report.csv", cv_report_csv(cv));
  write_file_atomic(out / "cv_timing.json", cv_timing_json(cv, kind));
}

json eval_json(const Evaluation& ev, const std::vector<PreparedImage>& images) {
  json per = json::array();
  for (std::size_t i = 0; i < images.size(); ++i) {
    per.push_back({{"image", images[i].name},
                   {"j", ev.per_image_j[i] ? json(*ev.per_image_j[i]) : json(nullptr)}});
  }
  return json{{"j", ev.j},
              {"tp", ev.cm.tp},
              {"fp", ev.cm.fp},
              {"tn", ev.cm.tn},
              {"fn", ev.cm.fn},
              {"per_image", per}};
}

int cmd_train(const Args& a) {
  const auto ctx = make_context(a);
  auto cfg = ctx.config;
  if (!a.model_kind.empty()) cfg.set("model.kind", ConfigScalar(a.model_kind));
  const auto grid = model_grid(cfg);
  const auto data = load_training(a, ctx);
  const auto tr = of_split(data.images, Split::kTrain);
  const auto te = of_split(data.images, Split::kTest);
  if (tr.empty()) throw data_error("cli.no_train", "manifest has no training images");

  const auto lg = lambda_grid(cfg);
  const auto result = train(grid, tr, data.window, data.opts, lg);
  ensure_dir(ctx.out);
  result.file.save(ctx.out / "model.json");
  if (result.cv) write_cv_outputs(ctx.out, *result.cv, grid.kind);

  json log{{"schema_version", kSchemaVersion},
           {"model", to_string(grid.kind)},
           {"spec", result.file.model.spec().label()},
           {"lambda", result.file.model.lambda()},
           {"train_images", tr.size()},
           {"test_images", te.size()},
           {"window_artifact", data.window.has_value()}};
  if (result.cv) {
    log["cv"] = {{"candidates", result.cv->entries.size()},
                 {"selected", result.cv->best().candidate.label()},
                 {"mean_j", result.cv->best().mean_j},
                 {"pooled_j", result.cv->pooled_j},
                 {"warnings", result.cv->warnings}};
  }
  log["train"] = eval_json(evaluate(result.file.model, tr), tr);
  if (!te.empty()) {
    const auto ev = evaluate(result.file.model, te);
    log["test"] = eval_json(ev, te);
    std::cout << "test J = " << ev.j << "\n";
  }
  write_json(ctx.out / "train_log.json", log);
  spdlog::info("train: {} selected {} (lambda {:.4g})", to_string(grid.kind), result.file.model.spec().label(),
               result.file.model.lambda());
  return kOk;
}

int cmd_cv(const Args& a) {
  const auto ctx = make_context(a);
  auto cfg = ctx.config;
  if (!a.model_kind.empty()) cfg.set("model.kind", ConfigScalar(a.model_kind));
  const auto grid = model_grid(cfg);
  const auto data = load_training(a, ctx);
  const auto tr = of_split(data.images, Split::kTrain);
  const auto cv = cross_validate(grid, tr, lambda_grid(cfg));
  ensure_dir(ctx.out);
  write_cv_outputs(ctx.out, cv, grid.kind);
  std::cout << "selected " << cv.best().candidate.label() << " mean J = " << cv.best().mean_j << "\n";
  return kOk;
}

int cmd_segment(const Args& a) {
  const auto ctx = make_context(a);
  if (a.models.size() != 1) throw usage_error("cli.model", "segment takes exactly one --model");
  const auto model = ModelFile::load(a.models.front());
  const auto frames = frames_from_args(a, ctx, model.options.site, "test");
  const bool png = a.png || ctx.config.get_bool("segment.png", false);

  ensure_dir(ctx.out);
  json items = json::array();
  std::vector<std::uint8_t> truth, pred;
  bool all_labeled = true;
  for (const auto& f : frames) {
    const auto post = model.model.posterior(features_of(model, f));
    const auto mask = apply_lambda(post, model.model.lambda());
    write_file_atomic(ctx.out / ("posterior_" + f.name + ".pgm"), encode_probability(post));
    write_mask(ctx.out / ("mask_" + f.name + ".pgm"), mask);
    if (png) write_file_atomic(ctx.out / ("overlay_" + f.name + ".png"), render_overlay_png(f.frame, mask));

    json item{{"image", f.name}, {"cloud_fraction", coverage(mask)}};
    if (f.labels) {
      const auto cm = confusion(*f.labels, mask);
      truth.insert(truth.end(), f.labels->values().begin(), f.labels->values().end());
      pred.insert(pred.end(), mask.values().begin(), mask.values().end());
      const bool defined = cm.tp + cm.fn > 0 && cm.tn + cm.fp > 0;
      item["j"] = defined ? json(j_statistic(cm)) : json(nullptr);
    } else {
      all_labeled = false;
    }
    items.push_back(item);
  }

  json report{{"schema_version", kSchemaVersion},
              {"model", to_string(model.model.kind())},
              {"spec", model.model.spec().label()},
              {"lambda", model.model.lambda()},
              {"images", items}};
  if (all_labeled && !truth.empty()) {
    const auto cm = confusion(truth, pred);
    const double j = j_statistic(cm);
    report["j"] = j;
    std::cout << "J = " << j << "\n";
  }
  write_json(ctx.out / "segment_report.json", report);
  return kOk;
}

int cmd_bench(const Args& a) {
  const auto ctx = make_context(a);
  if (a.models.size() != 1) throw usage_error("cli.model", "bench takes exactly one --model");
  const auto model = ModelFile::load(a.models.front());
  const auto frames = frames_from_args(a, ctx, model.options.site, "test");
  const int reps = a.reps > 0 ? a.reps : static_cast<int>(ctx.config.get_int("bench.reps", 5));
  if (reps < 1) throw usage_error("cli.reps", "--reps must be >= 1");

  std::vector<FeatureMatrix> feats;
  for (const auto& f : frames) feats.push_back(features_of(model, f));
  const auto predict_only = bench(frames.size(), reps, [&](std::size_t i) { (void)model.model.posterior(feats[i]); });
  const auto with_features =
      bench(frames.size(), reps, [&](std::size_t i) { (void)model.model.posterior(features_of(model, frames[i])); });

  json report{{"schema_version", kSchemaVersion},
              {"model", to_string(model.model.kind())},
              {"spec", model.model.spec().label()},
              {"frames", frames.size()},
              {"repetitions", reps},
              {"width", frames.front().frame.width()},
              {"height", frames.front().frame.height()},
              {"predict_only", latency_json(predict_only)},
              {"with_features", latency_json(with_features)}};
  ensure_dir(ctx.out);
  write_json(ctx.out / "bench.json", report);
  std::cout << to_string(model.model.kind()) << " median " << predict_only.median_ms << " ms/frame ("
            << with_features.median_ms << " ms with features)\n";
  return kOk;
}

int cmd_vote(const Args& a) {
  const auto ctx = make_context(a);
  auto paths = a.models;
  if (paths.empty()) {
    for (const auto& s : ctx.config.get_strings("vote.models", {})) paths.push_back((ctx.config_dir / s).string());
  }
  if (paths.size() < 2) throw usage_error("cli.vote", "vote needs at least two --model files");

  std::vector<ModelFile> models;
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& p : paths) {
    models.push_back(ModelFile::load(p));
    auto name = to_string(models.back().model.kind());
    if (seen[name]++) name += "#" + std::to_string(seen[name]);
    names.push_back(name);
  }

  const auto rule_s = a.rule.empty() ? ctx.config.get_string("vote.rule", "soft") : a.rule;
  VoteRule rule;
  if (rule_s == "soft") {
    rule = VoteRule::kSoftMean;
  } else if (rule_s == "hard") {
    rule = VoteRule::kHardMajority;
  } else {
    throw usage_error("cli.vote_rule", "vote rule must be soft or hard: " + rule_s);
  }

  const auto mpath = manifest_path(a, ctx);
  const auto site = models.front().options.site;
  const auto split_s = a.split.empty() ? ctx.config.get_string("vote.split", "train") : a.split;
  const auto validation = load_manifest_frames(mpath, site, parse_split(split_s));
  const auto all = load_manifest_frames(mpath, site, std::nullopt);

  // posts[m][image] for every frame of the manifest.
  std::vector<std::vector<ProbabilityMap>> posts(models.size());
  parallel_for(models.size(), [&](std::size_t m) {
    for (const auto& f : all) posts[m].push_back(models[m].model.posterior(features_of(models[m], f)));
  });
  const auto in_validation = [&](const LoadedFrame& f) {
    return std::any_of(validation.begin(), validation.end(), [&](const LoadedFrame& v) { return v.name == f.name; });
  };

  std::vector<std::vector<double>> vpost(models.size());
  std::vector<std::uint8_t> vtruth;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!in_validation(all[i])) continue;
    vtruth.insert(vtruth.end(), all[i].labels->values().begin(), all[i].labels->values().end());
    for (std::size_t m = 0; m < models.size(); ++m) {
      vpost[m].insert(vpost[m].end(), posts[m][i].values().begin(), posts[m][i].values().end());
    }
  }
  std::vector<double> lambdas;
  for (const auto& m : models) lambdas.push_back(m.model.lambda());
  const auto search = select_subset(names, vpost, vtruth, rule, lambdas);

  json singles = json::array();
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto t = tune_lambda(vpost[m], vtruth);
    singles.push_back({{"name", names[m]}, {"model", paths[m]}, {"validation_j", t.j}, {"lambda", t.lambda}});
  }
  json evaluated = json::array();
  for (const auto& s : search.evaluated) {
    json mem = json::array();
    for (auto k : s.members) mem.push_back(names[k]);
    evaluated.push_back({{"members", mem}, {"lambda", s.lambda}, {"j", s.j}});
  }

  // Combined posteriors and masks for every frame.
  ensure_dir(ctx.out / "masks");
  std::vector<std::uint8_t> test_truth, test_pred;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::vector<std::span<const double>> spans;
    std::vector<double> member_lambdas;
    for (auto k : search.best.members) {
      spans.push_back(posts[k][i].values());
      member_lambdas.push_back(lambdas[k]);
    }
    auto combined = rule == VoteRule::kSoftMean ? vote(spans) : hard_vote(spans, member_lambdas);
    const ProbabilityMap post(all[i].frame.width(), all[i].frame.height(), std::move(combined));
    const auto mask = apply_lambda(post, search.best.lambda);
    write_file_atomic(ctx.out / "masks" / ("posterior_" + all[i].name + ".pgm"), encode_probability(post));
    write_mask(ctx.out / "masks" / ("mask_" + all[i].name + ".pgm"), mask);
    if (all[i].split == Split::kTest) {
      test_truth.insert(test_truth.end(), all[i].labels->values().begin(), all[i].labels->values().end());
      test_pred.insert(test_pred.end(), mask.values().begin(), mask.values().end());
    }
  }

  json report{{"schema_version", kSchemaVersion},
              {"rule", rule_s},
              {"validation_split", split_s},
              {"members", search.best.names},
              {"lambda", search.best.lambda},
              {"validation_j", search.best.j},
              {"candidates", singles},
              {"evaluated", evaluated}};
  if (!test_truth.empty() && split_s != "test") {
    const double j = j_statistic(confusion(test_truth, test_pred));
    report["test_j"] = j;
  }
  write_json(ctx.out / "ensemble.json", report);
  std::cout << "ensemble validation J = " << search.best.j << " members:";
  for (const auto& n : search.best.names) std::cout << " " << n;
  std::cout << "\n";
  return kOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config -> settings

PipelineOptions pipeline_options(const Config& c) {
  PipelineOptions o;
  o.site.lapse_rate = c.get_double("site.lapse_rate", o.site.lapse_rate);
  o.site.tropopause_height = c.get_double("site.tropopause_height", o.site.tropopause_height);
  o.site.site_elevation = c.get_double("site.site_elevation", o.site.site_elevation);
  o.site.surface_temperature = c.get_double("site.surface_temperature", o.site.surface_temperature);
  o.site.validate();
  const auto cap = c.get_int("pipeline.clear_sky_capacity", static_cast<long long>(o.clear_sky_capacity));
  const auto pers = c.get_int("pipeline.persistence", static_cast<long long>(o.persistence));
  if (cap < 1 || pers < 1) throw usage_error("config.pipeline", "clear_sky_capacity and persistence must be >= 1");
  o.clear_sky_capacity = static_cast<std::size_t>(cap);
  o.persistence = static_cast<std::size_t>(pers);
  o.background_quantile = c.get_double("pipeline.background_quantile", o.background_quantile);
  if (!(o.background_quantile >= 0 && o.background_quantile <= 1)) {
    throw usage_error("config.pipeline", "background_quantile must lie in [0, 1]");
  }
  o.flow.window = static_cast<int>(c.get_int("pipeline.flow_window", o.flow.window));
  o.flow.weight_sigma = c.get_double("pipeline.flow_sigma", o.flow.weight_sigma);
  o.flow.damping = c.get_double("pipeline.flow_damping", o.flow.damping);
  return o;
}

SceneConfig scene_config(const Config& c) {
  SceneConfig s;
  const auto count = [&](const char* key, std::size_t v) {
    const auto n = c.get_int(std::string("synth.") + key, static_cast<long long>(v));
    if (n < 0) throw usage_error("config.synth", std::string("synth.") + key + " must be >= 0");
    return static_cast<std::size_t>(n);
  };
  const auto real = [&](const char* key, double v) { return c.get_double(std::string("synth.") + key, v); };
  const auto seed = c.get_int("synth.seed", static_cast<long long>(s.seed));
  if (seed < 0) throw usage_error("config.synth", "synth.seed must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  s.width = count("width", s.width);
  s.height = count("height", s.height);
  s.frames = count("frames", s.frames);
  s.train_frames = count("train_frames", s.train_frames);
  s.background = real("background", s.background);
  s.background_jitter = real("background_jitter", s.background_jitter);
  s.gradient = real("gradient", s.gradient);
  s.min_clouds = count("min_clouds", s.min_clouds);
  s.max_clouds = count("max_clouds", s.max_clouds);
  s.min_peak = real("min_peak", s.min_peak);
  s.max_peak = real("max_peak", s.max_peak);
  s.min_sigma = real("min_sigma", s.min_sigma);
  s.max_sigma = real("max_sigma", s.max_sigma);
  s.max_drift = real("max_drift", s.max_drift);
  s.noise_sigma = real("noise_sigma", s.noise_sigma);
  s.mask_fraction = real("mask_fraction", s.mask_fraction);
  s.window_amplitude = real("window_amplitude", s.window_amplitude);
  s.debris_spots = count("debris_spots", s.debris_spots);
  s.min_debris = real("min_debris", s.min_debris);
  s.max_debris = real("max_debris", s.max_debris);
  s.clear_sky_frames = count("clear_sky_frames", s.clear_sky_frames);
  s.clear_frame_per_split = c.get_bool("synth.clear_frame_per_split", s.clear_frame_per_split);
  s.heavy_frame_per_split = c.get_bool("synth.heavy_frame_per_split", s.heavy_frame_per_split);
  s.heavy_coverage = real("heavy_coverage", s.heavy_coverage);
  return s;
}

ModelGrid model_grid(const Config& c) {
  if (!c.has("model.kind")) throw usage_error("cli.model_kind", "no model family given ([model] kind or --model-kind)");
  const auto kind = parse_model_kind(c.get_string("model.kind", ""));
  auto g = default_grid(kind);

  if (c.has("features.variants") || c.has("features.neighborhoods") || c.has("features.expansion_orders") ||
      c.has("features.expansion_bias")) {
    std::vector<std::string> variants, hoods;
    for (const auto v : {FeatureVariant::kX1, FeatureVariant::kX2, FeatureVariant::kX3, FeatureVariant::kX4}) {
      variants.push_back(to_string(v));
    }
    for (const auto n : {Neighborhood::kSingle, Neighborhood::kFirstOrder, Neighborhood::kSecondOrder}) {
      hoods.push_back(to_string(n));
    }
    variants = c.get_strings("features.variants", variants);
    hoods = c.get_strings("features.neighborhoods", hoods);
    const auto orders = c.get_doubles("features.expansion_orders", {1.0});
    const double bias = c.get_double("features.expansion_bias", 1.0);
    g.specs.clear();
    for (double o : orders) {
      if (o != std::floor(o) || o < 1) throw usage_error("config.features", "expansion orders must be integers >= 1");
      if (o > 1 && !uses_expansion(kind)) continue;
      for (const auto& v : variants) {
        for (const auto& n : hoods) {
          g.specs.push_back({parse_variant(v), parse_neighborhood(n), static_cast<int>(o), bias});
        }
      }
    }
    if (g.specs.empty()) throw usage_error("config.features", "feature grid is empty");
  }

  g.gammas = c.get_doubles("model.gamma", g.gammas);
  g.Cs = c.get_doubles("model.C", g.Cs);
  g.betas = c.get_doubles("model.beta", g.betas);
  if (c.has("model.clique")) {
    g.cliques.clear();
    for (const auto& s : c.get_strings("model.clique", {})) g.cliques.push_back(parse_clique_order(s));
  }
  if (g.gammas.empty() || g.Cs.empty() || g.betas.empty() || g.cliques.empty()) {
    throw usage_error("config.model", "hyperparameter lists must not be empty");
  }
  g.base.alpha = c.get_double("model.alpha", g.base.alpha);
  const auto seed = c.get_int("model.seed", static_cast<long long>(g.base.seed));
  if (seed < 0) throw usage_error("config.model", "model.seed must be >= 0");
  g.base.seed = static_cast<std::uint64_t>(seed);
  g.base.max_sweeps = static_cast<int>(c.get_int("model.max_sweeps", g.base.max_sweeps));
  g.base.max_iter = static_cast<int>(c.get_int("model.max_iter", g.base.max_iter));
  g.base.likelihood_first_pass = c.get_bool("model.likelihood_first_pass", g.base.likelihood_first_pass);
  return g;
}

std::vector<double> lambda_grid(const Config& c) {
  const double lo = c.get_double("cv.lambda_min", 1e-2);
  const double hi = c.get_double("cv.lambda_max", 1e2);
  const auto n = c.get_int("cv.lambda_count", 101);
  if (!(lo > 0) || !(hi >= lo) || n < 1) throw usage_error("config.cv", "lambda grid needs 0 < min <= max, count >= 1");
  return log_grid(lo, hi, static_cast<std::size_t>(n));
}

std::string error_line(const Error& e) {
  return std::string("error code=") + e.code() + " kind=" + kind_name(e.kind()) + " message=" + quoted(e.what());
}

int run(const std::vector<std::string>& argv) {
  CLI::App app{"Infrared sky image cloud segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "irseg 1.0.0");
  Args a;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "TOML-style config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", a.seed, "Seed (overrides synth.seed and model.seed)");
    sub->add_option("--out", a.out, "Output directory");
    sub->add_option("--set", a.sets, "Config override section.key=value (repeatable)");
    sub->add_flag("-v,--verbose", a.verbose, "Log progress");
  };
  const auto manifest_opt = [&](CLI::App* sub) {
    sub->add_option("--manifest", a.manifest, "Dataset manifest CSV (else [data] manifest)");
  };
  const auto frame_opts = [&](CLI::App* sub) {
    sub->add_option("--frame", a.frames, "Frame PGM(s) to process instead of a manifest");
    sub->add_option("--previous", a.previous, "Preceding frame for the velocity field");
    sub->add_option("--labels", a.labels, "Ground-truth mask for --frame");
    sub->add_option("--split", a.split, "Manifest split: train, test or all");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  common(synth);
  auto* train_cmd = app.add_subcommand("train", "Cross-validate one model family and fit the selected model");
  common(train_cmd);
  manifest_opt(train_cmd);
  train_cmd->add_option("--model-kind", a.model_kind, "Model family (overrides [model] kind)");
  auto* cv = app.add_subcommand("cv", "Leave-one-out cross-validation report");
  common(cv);
  manifest_opt(cv);
  cv->add_option("--model-kind", a.model_kind, "Model family (overrides [model] kind)");
  auto* segment = app.add_subcommand("segment", "Posterior maps and masks for frames");
  common(segment);
  manifest_opt(segment);
  frame_opts(segment);
  segment->add_option("--model", a.models, "Model file")->required();
  segment->add_flag("--png", a.png, "Also write PNG overlays");
  auto* bench_cmd = app.add_subcommand("bench", "Per-frame prediction latency");
  common(bench_cmd);
  manifest_opt(bench_cmd);
  frame_opts(bench_cmd);
  bench_cmd->add_option("--model", a.models, "Model file")->required();
  bench_cmd->add_option("--reps", a.reps, "Repetitions over the frames");
  auto* vote_cmd = app.add_subcommand("vote", "Select a voting ensemble of trained models");
  common(vote_cmd);
  manifest_opt(vote_cmd);
  vote_cmd->add_option("--model", a.models, "Model files (2 to 10)");
  vote_cmd->add_option("--split", a.split, "Validation split: train, test or all");
  vote_cmd->add_option("--rule", a.rule, "soft or hard");

  try {
    std::vector<std::string> rev(argv.rbegin(), argv.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_line(usage_error("cli.args", e.what())) << "\n";
    return kUsage;
  }

  spdlog::set_level(a.verbose ? spdlog::level::info : spdlog::level::warn);
  try {
    if (*synth) return cmd_synth(a);
    if (*train_cmd) return cmd_train(a);
    if (*cv) return cmd_cv(a);
    if (*segment) return cmd_segment(a);
    if (*bench_cmd) return cmd_bench(a);
    if (*vote_cmd) return cmd_vote(a);
  } catch (const Error& e) {
    std::cerr << error_line(e) << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << error_line(data_error("io", e.what())) << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << error_line(data_error("json", e.what())) << "\n";
    return kData;
  } catch (const std::bad_alloc&) {
    std::cerr << error_line(numerical_error("alloc", "out of memory")) << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << error_line(data_error("internal", e.what())) << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace irseg::cli
