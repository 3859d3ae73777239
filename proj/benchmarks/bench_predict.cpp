// Per-frame latency of feature extraction and of each model's prediction on the
// default synthetic scene.
#include <map>
#include <memory>

#include <benchmark/benchmark.h>

#include "irseg/pipeline.hpp"
#include "irseg/synth.hpp"

namespace {

using namespace irseg;

struct Fixture {
  std::vector<PreparedImage> train;
  std::vector<PreparedImage> test;
  std::optional<TemperatureImage> window;
  PipelineOptions opts;
  FeatureSpec spec{FeatureVariant::kX4, Neighborhood::kFirstOrder, 1, 1.0};
  std::vector<FeatureMatrix> train_features;
  std::vector<FeatureMatrix> test_features;
  std::map<ModelKind, Segmenter> models;

  Fixture() {
    const SceneConfig sc;
    const auto scene = generate(sc);
    window = estimate_window(scene.clear_sky, opts);
    for (const auto& f : scene.frames) {
      PreparedImage im;
      im.split = f.split;
      im.frame = f.frame;
      im.previous = f.previous;
      im.labels = f.mask;
      im.bundle = build_bundle(f.frame, &f.previous, window ? &*window : nullptr, opts);
      (f.split == Split::kTrain ? train : test).push_back(std::move(im));
    }
    for (const auto& im : train) train_features.push_back(assemble(im.bundle, spec));
    for (const auto& im : test) test_features.push_back(assemble(im.bundle, spec));
  }

  const Segmenter& model(ModelKind kind) {
    auto it = models.find(kind);
    if (it != models.end()) return it->second;
    std::vector<const FeatureMatrix*> xs;
    std::vector<const LabelMask*> ys;
    for (std::size_t i = 0; i < train.size(); ++i) {
      xs.push_back(&train_features[i]);
      ys.push_back(&train[i].labels);
    }
    Hyper h;
    h.gamma = kind == ModelKind::kRR || kind == ModelKind::kGP ? 1.0 : 1e2;
    return models.emplace(kind, Segmenter::fit(kind, spec, h, xs, ys)).first->second;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_Features(benchmark::State& state) {
  auto& fx = fixture();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& im = fx.test[i++ % fx.test.size()];
    auto b = build_bundle(im.frame, &*im.previous, fx.window ? &*fx.window : nullptr, fx.opts);
    benchmark::DoNotOptimize(assemble(b, fx.spec));
  }
}
BENCHMARK(BM_Features)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  auto& fx = fixture();
  const auto kind = static_cast<ModelKind>(state.range(0));
  const auto& m = fx.model(kind);
  state.SetLabel(to_string(kind));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.posterior(fx.test_features[i++ % fx.test_features.size()]));
}
BENCHMARK(BM_Predict)
    ->Arg(static_cast<int>(ModelKind::kGDA))
    ->Arg(static_cast<int>(ModelKind::kNBC))
    ->Arg(static_cast<int>(ModelKind::kRR))
    ->Arg(static_cast<int>(ModelKind::kSVC))
    ->Arg(static_cast<int>(ModelKind::kGP))
    ->Arg(static_cast<int>(ModelKind::kMRF))
    ->Arg(static_cast<int>(ModelKind::kIcmMRF))
    ->Arg(static_cast<int>(ModelKind::kSaMRF))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
