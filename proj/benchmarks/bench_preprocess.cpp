#include <benchmark/benchmark.h>

#include "affbench/image.hpp"
#include "affbench/synthetic.hpp"

using namespace affbench;

namespace {

RawImage sample_frame() {
  SceneSpec spec;
  return render_scene(spec, 2, {spec.width / 2.0, spec.height / 2.0}, 5.0, CameraId::center, 7, 8);
}

void BM_Preprocess(benchmark::State& state) {
  RawImage img = sample_frame();
  for (auto _ : state) {
    Tensor t = preprocess(img);
    benchmark::DoNotOptimize(t.data());
  }
}
BENCHMARK(BM_Preprocess)->Unit(benchmark::kMillisecond);

void BM_ResizeBilinear(benchmark::State& state) {
  RawImage img = sample_frame();
  Tensor chw({3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        chw.data()[(c * img.height + y) * img.width + x] = img.at(y, x, c) / 255.0f;
  for (auto _ : state) {
    Tensor t = resize_bilinear(chw, kInputSize, kInputSize);
    benchmark::DoNotOptimize(t.data());
  }
}
BENCHMARK(BM_ResizeBilinear)->Unit(benchmark::kMillisecond);

void BM_PngEncodeDecode(benchmark::State& state) {
  RawImage img = sample_frame();
  std::string path = "/tmp/affbench_bench_frame.png";
  for (auto _ : state) {
    save_png(path, img);
    RawImage back = load_image(path);
    benchmark::DoNotOptimize(back.pixels.data());
  }
}
BENCHMARK(BM_PngEncodeDecode)->Unit(benchmark::kMillisecond);

}  // namespace
