#include "paza/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace paza {
namespace {

cv::Mat to_mat(const Image& image) {
  // const_cast is safe: the Mat header is only read from.
  return cv::Mat(image.height, image.width, CV_8UC(image.channels), const_cast<std::uint8_t*>(image.pixels.data()));
}

Image from_mat(const cv::Mat& mat) {
  cv::Mat m = mat.isContinuous() ? mat : mat.clone();
  Image out;
  out.width = m.cols;
  out.height = m.rows;
  out.channels = m.channels();
  out.pixels.assign(m.data, m.data + m.total() * m.elemSize());
  return out;
}

}  // namespace

std::optional<Image> load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) return std::nullopt;
  return from_mat(m);
}

Image crop_image(const Image& image, const BBox& rect) {
  const int x1 = std::clamp(static_cast<int>(std::floor(rect.x1)), 0, image.width);
  const int y1 = std::clamp(static_cast<int>(std::floor(rect.y1)), 0, image.height);
  const int x2 = std::clamp(static_cast<int>(std::ceil(rect.x2)), x1, image.width);
  const int y2 = std::clamp(static_cast<int>(std::ceil(rect.y2)), y1, image.height);
  Image out;
  out.width = x2 - x1;
  out.height = y2 - y1;
  out.channels = image.channels;
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y) {
    const std::uint8_t* src = image.at(x1, y1 + y);
    std::copy(src, src + static_cast<std::size_t>(out.width) * out.channels, out.at(0, y));
  }
  return out;
}

Image fit_long_side(const Image& image, int max_side) {
  const int long_side = std::max(image.width, image.height);
  if (max_side <= 0 || long_side <= max_side) return image;
  const double scale = static_cast<double>(max_side) / long_side;
  cv::Mat resized;
  cv::resize(to_mat(image), resized,
             cv::Size(std::max(1, static_cast<int>(std::lround(image.width * scale))),
                      std::max(1, static_cast<int>(std::lround(image.height * scale)))),
             0, 0, cv::INTER_AREA);
  return from_mat(resized);
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
  std::vector<std::uint8_t> buf;
  if (image.width == 0 || image.height == 0) return buf;
  cv::imencode(".jpg", to_mat(image), buf, {cv::IMWRITE_JPEG_QUALITY, quality});
  return buf;
}

bool write_jpeg(const std::filesystem::path& path, const Image& image, int quality) {
  const auto bytes = encode_jpeg(image, quality);
  if (bytes.empty()) return false;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return static_cast<bool>(f);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::filesystem::path FileImageSource::resolve(const std::string& image_ref) const {
  std::string ref = image_ref;
  if (ref.rfind("file://", 0) == 0) ref = ref.substr(7);
  std::filesystem::path p(ref);
  return p.is_absolute() ? p : base_dir_ / p;
}

std::optional<Image> FileImageSource::load_crop(const ClipFrame& frame) const {
  if (!frame.image_ref) return std::nullopt;
  auto img = load_image(resolve(*frame.image_ref));
  if (!img) return std::nullopt;
  Image crop = crop_image(*img, frame.crop_rect);
  if (crop.width == 0 || crop.height == 0) return std::nullopt;
  return crop;
}

std::optional<std::string> FileImageSource::jpeg_base64(const ClipFrame& frame) const {
  auto crop = load_crop(frame);
  if (!crop) return std::nullopt;
  const auto jpeg = encode_jpeg(fit_long_side(*crop, max_side_), jpeg_quality_);
  if (jpeg.empty()) return std::nullopt;
  return base64_encode(jpeg);
}

}  // namespace paza
