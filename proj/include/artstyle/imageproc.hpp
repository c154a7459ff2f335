#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "artstyle/common.hpp"

namespace artstyle {

/// Interleaved 8-bit RGB image.
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  /// Filled with `fill` in every channel.
  RasterImage(int width, int height, std::uint8_t fill = 0);
  RasterImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t at(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * kChannels +
                   static_cast<std::size_t>(c)];
  }
  std::uint8_t& at(int x, int y, int c) {
    return pixels_[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * kChannels +
                   static_cast<std::size_t>(c)];
  }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  bool operator==(const RasterImage&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

enum class PreprocessVariant { Resize, CenterCropOf2x, RandomCropOf2x };

std::string_view variant_name(PreprocessVariant variant);  // resize | center_crop_2x | random_crop_2x
PreprocessVariant parse_variant(std::string_view name);

/// Square network input. Side is at least 32.
struct InputSpec {
  int side = 224;
  PreprocessVariant variant = PreprocessVariant::Resize;

  void validate() const;
  /// Edge of the image before cropping: side for Resize, 2*side otherwise.
  int intermediate_side() const;
  bool operator==(const InputSpec&) const = default;
};

/// Bilinear resize to side x side (aspect ratio not preserved).
RasterImage resize(const RasterImage& image, int side);
RasterImage resize(const RasterImage& image, int width, int height);

struct CropAnchor {
  enum class Kind { Center, Random } kind = Kind::Center;
  std::uint64_t seed = 0;

  static CropAnchor center() { return {Kind::Center, 0}; }
  static CropAnchor random(std::uint64_t seed) { return {Kind::Random, seed}; }
};

struct CropOffset {
  int x = 0;
  int y = 0;
  bool operator==(const CropOffset&) const = default;
};

/// Offset a crop of `side` would use on a width x height image.
CropOffset crop_offset(int width, int height, int side, const CropAnchor& anchor);

/// Throws DataError when the image is smaller than `side` in either dimension.
RasterImage crop(const RasterImage& image, int side, const CropAnchor& anchor);

/// Evaluation-time preprocessing. RandomCropOf2x seeds its crop from the
/// image id, so repeated evaluation sees the same patch.
RasterImage preprocess(const RasterImage& image, const InputSpec& spec, std::string_view image_id);

/// Training-time preprocessing: the random crop is redrawn on every call.
RasterImage preprocess_training(const RasterImage& image, const InputSpec& spec, Rng& rng);

// The nine distortions of the augmentation table, in application order.
enum class Distortion {
  HorizontalFlip,
  VerticalFlip,
  Shear,
  Zoom,
  Rotation,
  WidthShift,
  HeightShift,
  ChannelShift,
  Brightness,
};

inline constexpr std::array<Distortion, 9> kAllDistortions = {
    Distortion::HorizontalFlip, Distortion::VerticalFlip, Distortion::Shear,
    Distortion::Zoom,           Distortion::Rotation,     Distortion::WidthShift,
    Distortion::HeightShift,    Distortion::ChannelShift, Distortion::Brightness};

std::string_view distortion_name(Distortion d);

struct AugmentationParams {
  double rotation_max = 15.0;        // degrees
  double width_shift_max = 0.1;      // fraction of width
  double height_shift_max = 0.1;     // fraction of height
  double zoom_lo = 0.9;
  double zoom_hi = 1.1;
  double shear_max = 10.0;           // degrees
  double channel_shift_max = 20.0;   // intensity units
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  double flip_probability = 0.5;

  void validate() const;
  bool operator==(const AugmentationParams&) const = default;
};

void to_json(nlohmann::json& j, const AugmentationParams& p);
void from_json(const nlohmann::json& j, AugmentationParams& p);

/// Augmentation level 1..4.
class AugmentationLevel {
 public:
  explicit AugmentationLevel(int level);
  int value() const { return level_; }
  bool enables(Distortion d) const;
  std::vector<Distortion> enabled() const;

 private:
  int level_;
};

/// Applies one distortion with an already-drawn magnitude:
///   flips ignore the magnitude; Shear and Rotation take degrees; Zoom takes
///   a magnification factor; WidthShift/HeightShift take a fraction of the
///   edge; ChannelShift takes an additive offset; Brightness a multiplier.
/// Geometric transforms resample bilinearly about the image center with
/// reflected borders and keep the image size.
RasterImage apply_distortion(const RasterImage& image, Distortion distortion, double magnitude);

/// Applies every distortion enabled at `level` in kAllDistortions order,
/// each with its own draw from `rng`. Level 1 returns the input unchanged
/// and consumes no randomness.
RasterImage augment(const RasterImage& image, const AugmentationLevel& level,
                    const AugmentationParams& params, Rng& rng);

}  // namespace artstyle
