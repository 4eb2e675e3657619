#include "pelc/image.hpp"

#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pelc/common.hpp"

namespace pelc {

namespace {

double uniform(at::Generator& gen, double lo, double hi) {
  auto t = at::rand({1}, gen, at::TensorOptions().dtype(at::kDouble));
  return lo + (hi - lo) * t.item<double>();
}

}  // namespace

torch::Tensor generate_image(std::uint64_t seed, int height, int width, int channels) {
  auto gen = make_generator(seed ^ 0x517cc1b727220a95ull);
  auto ys = torch::linspace(0, 1, height).view({height, 1}).expand({height, width});
  auto xs = torch::linspace(0, 1, width).view({1, width}).expand({height, width});

  auto img = torch::zeros({channels, height, width});
  for (int c = 0; c < channels; ++c) {
    img[c] = uniform(gen, 0.2, 0.8) + uniform(gen, -0.4, 0.4) * xs +
             uniform(gen, -0.4, 0.4) * ys;
  }

  int shapes = 2 + int(uniform(gen, 0, 3));
  for (int s = 0; s < shapes; ++s) {
    double cy = uniform(gen, 0.1, 0.9), cx = uniform(gen, 0.1, 0.9);
    double ry = uniform(gen, 0.08, 0.35), rx = uniform(gen, 0.08, 0.35);
    double softness = uniform(gen, 0.02, 0.12);
    auto d = torch::sqrt(((ys - cy) / ry).pow(2) + ((xs - cx) / rx).pow(2));
    auto alpha = torch::clamp((1.0 - d) / softness, 0.0, 1.0);
    for (int c = 0; c < channels; ++c) {
      double color = uniform(gen, 0.0, 1.0);
      img[c] = img[c] * (1.0 - alpha) + color * alpha;
    }
  }

  // low-frequency sinusoid texture
  double fy = uniform(gen, 1.0, 4.0), fx = uniform(gen, 1.0, 4.0);
  double phase = uniform(gen, 0.0, 6.28);
  auto tex = 0.5 + 0.5 * torch::sin(fy * 6.28318 * ys + fx * 6.28318 * xs + phase);
  double amp = uniform(gen, 0.03, 0.1);
  img = img * (1.0 - amp) + amp * tex.unsqueeze(0);

  return torch::clamp(img, 0.0, 1.0).contiguous();
}

void save_image_png(const torch::Tensor& img_chw, const std::string& path) {
  auto img = torch::clamp(img_chw, 0.0, 1.0).to(torch::kFloat32).contiguous();
  const int c = int(img.size(0)), h = int(img.size(1)), w = int(img.size(2));
  auto u8 = (img * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat mat;
  if (c == 3) {
    cv::Mat rgb(h, w, CV_8UC3, u8.data_ptr());
    cv::cvtColor(rgb, mat, cv::COLOR_RGB2BGR);
  } else if (c == 1) {
    mat = cv::Mat(h, w, CV_8UC1, u8.data_ptr()).clone();
  } else {
    throw std::invalid_argument("save_image_png: expected 1 or 3 channels");
  }
  if (!cv::imwrite(path, mat)) throw std::runtime_error("failed to write " + path);
}

torch::Tensor load_image_png(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw std::runtime_error("failed to read " + path);
  double scale = mat.depth() == CV_16U ? 65535.0 : 255.0;
  if (mat.channels() == 3) {
    cv::Mat rgb;
    cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(rgb, CV_32FC3, 1.0 / scale);
    auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kFloat32).clone();
    return t.permute({2, 0, 1}).contiguous();
  }
  cv::Mat gray;
  mat.convertTo(gray, CV_32FC1, 1.0 / scale);
  return torch::from_blob(gray.data, {1, gray.rows, gray.cols}, torch::kFloat32).clone();
}

void save_mask_png(const torch::Tensor& mask_hw, const std::string& path, bool binary) {
  auto m = torch::clamp(mask_hw, 0.0, 1.0).to(torch::kFloat32).contiguous();
  const int h = int(m.size(0)), w = int(m.size(1));
  cv::Mat mat;
  if (binary) {
    auto u8 = (m * 255.0).round().to(torch::kUInt8).contiguous();
    mat = cv::Mat(h, w, CV_8UC1, u8.data_ptr()).clone();
  } else {
    cv::Mat tmp(h, w, CV_32FC1, m.data_ptr());
    tmp.convertTo(mat, CV_16UC1, 65535.0);
  }
  if (!cv::imwrite(path, mat)) throw std::runtime_error("failed to write " + path);
}

torch::Tensor load_mask_png(const std::string& path) {
  auto img = load_image_png(path);
  if (img.size(0) != 1) img = img.mean(0, true);
  return img.squeeze(0).contiguous();
}

}  // namespace pelc
