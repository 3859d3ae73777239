#include <doctest.h>

#include <json.hpp>

#include "irseg/config.hpp"
#include "irseg/pgm.hpp"
#include "irseg/pipeline.hpp"
#include "irseg/synth.hpp"
#include "test_util.hpp"

using namespace irseg;

namespace {

struct SmallScene {
  test::TempDir dir{"pipeline"};
  SceneConfig config;
  PipelineOptions opts;
  std::optional<TemperatureImage> window;
  std::vector<PreparedImage> images;

  SmallScene() {
    config.width = 40;
    config.height = 30;
    config.frames = 6;
    config.train_frames = 4;
    config.clear_sky_frames = 10;
    config.min_sigma = 3;
    config.max_sigma = 7;
    const auto scene = generate(config);
    const auto manifest = load_manifest(write_dataset(scene, config, dir.path()));
    window = estimate_window(scene.clear_sky, opts);
    images = prepare(manifest, window ? &*window : nullptr, opts);
  }

  std::vector<PreparedImage> split(Split s) const { return of_split(images, s); }
};

std::pair<std::vector<FeatureMatrix>, std::vector<const LabelMask*>> features(const std::vector<PreparedImage>& imgs,
                                                                              const FeatureSpec& spec) {
  std::vector<FeatureMatrix> f;
  std::vector<const LabelMask*> y;
  for (const auto& i : imgs) {
    f.push_back(assemble(i.bundle, spec));
    y.push_back(&i.labels);
  }
  return {std::move(f), y};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST_CASE("config parses sections, scalars and lists") {
  const auto c = Config::parse(R"(
# comment line
top = 1
[site]
lapse_rate = 9.8   # trailing comment
name = "east # roof"
[model]
kind = "GDA"
gamma = [1e-4, 1, 1e4]
ok = true
)");
  CHECK(c.get_double("top", 0) == 1.0);
  CHECK(c.get_double("site.lapse_rate", 0) == 9.8);
  CHECK(c.get_string("site.name", "") == "east # roof");
  CHECK(c.get_string("model.kind", "") == "GDA");
  CHECK(c.get_doubles("model.gamma", {}) == std::vector<double>{1e-4, 1, 1e4});
  CHECK(c.get_doubles("site.lapse_rate", {}) == std::vector<double>{9.8});
  CHECK(c.get_bool("model.ok", false));
  CHECK(c.get_int("missing.key", 7) == 7);
  CHECK_FALSE(c.has("missing.key"));
}

TEST_CASE("config overrides and errors") {
  auto c = Config::parse("[model]\nkind = \"RR\"\n");
  c.set_override("model.kind=\"SVC\"");
  c.set_override("cv.lambda_count=11");
  CHECK(c.get_string("model.kind", "") == "SVC");
  CHECK(c.get_int("cv.lambda_count", 0) == 11);
  CHECK(test::error_code_of([&] { c.set_override("nonsense"); }) == "config.override");
  CHECK(test::error_code_of([&] { c.get_double("model.kind", 0); }) == "config.type");
  CHECK(test::error_code_of([] { Config::parse("[model\n"); }) == "config.section");
  CHECK(test::error_code_of([] { Config::parse("x y\n"); }) == "config.syntax");
  CHECK(test::error_code_of([] { Config::parse("x = \"open\n"); }) == "config.string");
  CHECK(test::error_code_of([] { Config::parse("x = [1, 2\n"); }) == "config.list");
  CHECK(test::error_code_of([] { Config::parse("x = 1.5.2\n"); }) == "config.value");
  CHECK(test::error_code_of([] { Config::parse("x = 1.5\n").get_int("x", 0); }) == "config.type");
  CHECK(test::error_code_of([] { Config::load("/nonexistent/cfg.toml"); }) == "config.missing");
}

// ---------------------------------------------------------------------------
// Grid

TEST_CASE("grid candidates enumerate specs times hyperparameters") {
  auto g = default_grid(ModelKind::kMRF);
  CHECK(g.specs.size() == 12);
  CHECK(grid_candidates(g).size() == 12 * 9 * 5);
  g.cliques = {CliqueOrder::kFirst, CliqueOrder::kSecond};
  CHECK(grid_candidates(g).size() == 12 * 9 * 5 * 2);
  CHECK(grid_candidates(default_grid(ModelKind::kNBC)).size() == 12);
  const auto svc = default_grid(ModelKind::kSVC);
  const auto cand = grid_candidates(svc);
  CHECK(candidate_hyper(svc, cand[3]).C == svc.Cs[3]);
  auto empty = default_grid(ModelKind::kRR);
  empty.gammas.clear();
  CHECK(test::error_code_of([&] { grid_candidates(empty); }) == "grid.empty");
}

// ---------------------------------------------------------------------------
// Preparation

TEST_CASE("prepared images carry every derived field") {
  SmallScene s;
  REQUIRE(s.window.has_value());
  REQUIRE(s.images.size() == 6);
  CHECK(s.split(Split::kTrain).size() == 4);
  for (const auto& img : s.images) {
    REQUIRE(img.bundle.width() == 40);
    REQUIRE(img.previous.has_value());
    for (const auto& spec : all_feature_specs()) {
      const auto f = assemble(img.bundle, spec);
      REQUIRE(f.values.rows() == 1200);
      REQUIRE(static_cast<std::size_t>(f.values.cols()) == spec.raw_dim());
      REQUIRE(f.values.allFinite());
    }
  }
  CHECK_FALSE(estimate_window({}, s.opts).has_value());
}

TEST_CASE("list_frames is sorted and ignores other files") {
  test::TempDir dir("list");
  write_frame(dir / "b.pgm", TemperatureImage(2, 2, 1.0));
  write_frame(dir / "a.pgm", TemperatureImage(2, 2, 1.0));
  write_file_atomic(dir / "notes.txt", "x");
  const auto f = list_frames(dir.path());
  REQUIRE(f.size() == 2);
  CHECK(f[0].filename() == "a.pgm");
  CHECK(list_frames(dir / "missing").empty());
}

// ---------------------------------------------------------------------------
// Models and serialization

TEST_CASE("every model kind round-trips through JSON with identical posteriors") {
  SmallScene s;
  const auto train = s.split(Split::kTrain);
  FeatureSpec spec;
  spec.variant = FeatureVariant::kX3;
  spec.neighborhood = Neighborhood::kFirstOrder;
  auto [feats, labels] = features(train, spec);
  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  const auto probe = assemble(s.split(Split::kTest).front().bundle, spec);

  for (auto kind : all_model_kinds()) {
    CAPTURE(to_string(kind));
    Hyper h;
    h.gamma = is_linear(kind) ? 1.0 : 1e2;
    h.max_sweeps = 5;
    h.max_iter = 5;
    auto m = Segmenter::fit(kind, spec, h, ptrs, labels);
    m.set_lambda(1.7);
    const auto text = m.to_json();
    const auto back = Segmenter::from_json(text);
    REQUIRE(back.to_json() == text);
    REQUIRE(back.kind() == kind);
    REQUIRE(back.lambda() == 1.7);
    const auto a = m.posterior(probe), b = back.posterior(probe);
    REQUIRE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
    for (double p : a.values()) REQUIRE((p >= 0 && p <= 1));
    REQUIRE(parse_model_kind(to_string(kind)) == kind);
  }
  CHECK(test::error_code_of([] { parse_model_kind("LSTM"); }) == "model.kind");
}

TEST_CASE("model file errors") {
  CHECK(test::error_code_of([] { Segmenter::from_json("{not json"); }) == "model.parse");
  CHECK(test::error_code_of([] { Segmenter::from_json(R"({"schema_version": 99})"); }) == "model.schema");
  CHECK(test::error_code_of([] { ModelFile::load("/nonexistent/model.json"); }) == "model.missing");
  CHECK(test::error_code_of([] { ModelFile::from_json("[]"); }) != "");
}

TEST_CASE("training selects by LOO, refits and round-trips the model file") {
  SmallScene s;
  const auto train_images = s.split(Split::kTrain);
  const auto test_images = s.split(Split::kTest);
  auto grid = default_grid(ModelKind::kGDA);
  grid.specs = {all_feature_specs()[0], all_feature_specs()[7]};
  grid.gammas = {1e-2, 1e2};
  const auto lg = default_lambda_grid();
  const auto r = train(grid, train_images, s.window, s.opts, lg);
  REQUIRE(r.cv.has_value());
  CHECK(r.cv->folds == 4);
  CHECK(r.cv->entries.size() == 4);
  const auto& best = r.cv->best();
  CHECK(r.file.model.spec() == best.candidate.spec);
  CHECK(r.file.model.hyper().gamma == best.candidate.hyper[0].second);
  CHECK(r.file.model.lambda() == r.cv->pooled_lambda);

  // The refit equals a direct fit on every training image.
  auto [feats, labels] = features(train_images, best.candidate.spec);
  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  auto direct = Segmenter::fit(ModelKind::kGDA, best.candidate.spec, candidate_hyper(grid, best.candidate), ptrs, labels);
  direct.set_lambda(r.cv->pooled_lambda);
  CHECK(direct == r.file.model);

  // Evaluation oracle: pooled confusion of the thresholded posteriors.
  const auto ev = evaluate(r.file.model, test_images);
  ConfusionMatrix cm;
  const auto post = posteriors(r.file.model, test_images);
  for (std::size_t i = 0; i < test_images.size(); ++i) {
    const auto pred = apply_lambda(post[i], r.file.model.lambda());
    const auto c = confusion(test_images[i].labels, pred);
    cm.tp += c.tp;
    cm.fp += c.fp;
    cm.tn += c.tn;
    cm.fn += c.fn;
  }
  CHECK(ev.cm == cm);
  CHECK(ev.j == j_statistic(cm));
  CHECK(ev.per_image_j.size() == test_images.size());
  CHECK_FALSE(ev.per_image_j.front().has_value());  // the clear frame
  CHECK(ev.j > 0.8);

  test::TempDir dir("modelfile");
  r.file.save(dir / "model.json");
  const auto back = ModelFile::load(dir / "model.json");
  CHECK(back.to_json() == r.file.to_json());
  REQUIRE(back.window.has_value());
  CHECK(*back.window == *s.window);
  CHECK(back.options.background_quantile == s.opts.background_quantile);
  const auto& img = test_images[1];
  const auto b1 = back.bundle(img.frame, &*img.previous);
  CHECK(assemble(b1, back.model.spec()).values == assemble(img.bundle, back.model.spec()).values);
}

TEST_CASE("cv reports are deterministic and tabular") {
  SmallScene s;
  const auto train_images = s.split(Split::kTrain);
  auto grid = default_grid(ModelKind::kNBC);
  grid.specs = {all_feature_specs()[0], all_feature_specs()[1]};
  const auto lg = default_lambda_grid();
  const auto a = cross_validate(grid, train_images, lg), b = cross_validate(grid, train_images, lg);
  CHECK(cv_report_json(a, ModelKind::kNBC) == cv_report_json(b, ModelKind::kNBC));
  const auto j = nlohmann::json::parse(cv_report_json(a, ModelKind::kNBC));
  CHECK(j.dump().find("seconds") == std::string::npos);
  const auto t = nlohmann::json::parse(cv_timing_json(a, ModelKind::kNBC));
  CHECK(t.dump().find("seconds") != std::string::npos);
  const auto csv = cv_report_csv(a);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header plus one row per candidate
  CHECK(test::error_code_of([&] {
          cross_validate(grid, std::vector<PreparedImage>(train_images.begin(), train_images.begin() + 1), lg);
        }) == "cv.folds");
}
