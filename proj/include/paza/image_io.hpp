// Raster decode/encode helpers for VLM payloads and alert snapshots.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paza/clip_builder.hpp"
#include "paza/vlm_gateway.hpp"

namespace paza {

// BGR, 3 channels. nullopt when the file is missing or undecodable.
std::optional<Image> load_image(const std::filesystem::path& path);

// Clamps the rectangle to the image and copies the covered pixels.
Image crop_image(const Image& image, const BBox& rect);

// Downscales so that max(width, height) <= max_side. No-op when already small.
Image fit_long_side(const Image& image, int max_side);

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality);
bool write_jpeg(const std::filesystem::path& path, const Image& image, int quality);

std::string base64_encode(std::span<const std::uint8_t> bytes);

// Resolves image_ref against base_dir when relative, crops to the clip frame's
// crop_rect and re-encodes as JPEG.
class FileImageSource final : public FrameImageSource {
 public:
  FileImageSource(std::filesystem::path base_dir, int jpeg_quality, int max_side)
      : base_dir_(std::move(base_dir)), jpeg_quality_(jpeg_quality), max_side_(max_side) {}

  std::optional<std::string> jpeg_base64(const ClipFrame& frame) const override;
  std::optional<Image> load_crop(const ClipFrame& frame) const;
  std::filesystem::path resolve(const std::string& image_ref) const;

 private:
  std::filesystem::path base_dir_;
  int jpeg_quality_;
  int max_side_;
};

}  // namespace paza
