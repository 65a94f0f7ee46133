#include "affbench/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>

namespace affbench {

RawImage load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("load_image: cannot decode '" + path + "'");
  if (m.channels() != 3)
    throw std::runtime_error("load_image: expected 3 channels, got " +
                             std::to_string(m.channels()) + " in '" + path + "'");
  if (m.depth() != CV_8U) throw std::runtime_error("load_image: expected 8-bit image: " + path);

  RawImage img;
  img.width = m.cols;
  img.height = m.rows;
  img.pixels.resize(static_cast<size_t>(m.rows) * m.cols * 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV stores BGR.
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

void save_png(const std::string& path, const RawImage& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x][0] = img.at(y, x, 2);
      row[x][1] = img.at(y, x, 1);
      row[x][2] = img.at(y, x, 0);
    }
  }
  if (!cv::imwrite(path, m)) throw std::runtime_error("save_png: cannot write '" + path + "'");
}

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
  const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  Tensor out({C, out_h, out_w});
  const float sy = static_cast<float>(H) / out_h;
  const float sx = static_cast<float>(W) / out_w;
  for (int64_t c = 0; c < C; ++c) {
    const float* src = chw.data() + c * H * W;
    float* dst = out.data() + static_cast<int64_t>(c) * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      float fy = (oy + 0.5f) * sy - 0.5f;
      int y0 = static_cast<int>(std::floor(fy));
      float wy = fy - y0;
      int y0c = std::clamp(y0, 0, static_cast<int>(H) - 1);
      int y1c = std::clamp(y0 + 1, 0, static_cast<int>(H) - 1);
      for (int ox = 0; ox < out_w; ++ox) {
        float fx = (ox + 0.5f) * sx - 0.5f;
        int x0 = static_cast<int>(std::floor(fx));
        float wx = fx - x0;
        int x0c = std::clamp(x0, 0, static_cast<int>(W) - 1);
        int x1c = std::clamp(x0 + 1, 0, static_cast<int>(W) - 1);
        float top = src[y0c * W + x0c] * (1 - wx) + src[y0c * W + x1c] * wx;
        float bot = src[y1c * W + x0c] * (1 - wx) + src[y1c * W + x1c] * wx;
        dst[oy * out_w + ox] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Tensor preprocess(const RawImage& raw) {
  Tensor chw({3, raw.height, raw.width});
  const int64_t plane = static_cast<int64_t>(raw.height) * raw.width;
  for (int c = 0; c < 3; ++c) {
    float* dst = chw.data() + c * plane;
    for (int y = 0; y < raw.height; ++y)
      for (int x = 0; x < raw.width; ++x)
        dst[static_cast<int64_t>(y) * raw.width + x] = raw.at(y, x, c) / 255.0f;
  }

  return preprocess_chw(chw);
}

Tensor preprocess_chw(const Tensor& chw) {
  Tensor resized = resize_bilinear(chw, kInputSize, kInputSize);
  for (int64_t i = 0; i < resized.numel(); ++i) resized[i] = (resized[i] - 0.5f) * 2.0f;
  return resized;
}

}  // namespace affbench
