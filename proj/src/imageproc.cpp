#include "artstyle/imageproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace artstyle {

RasterImage::RasterImage(int width, int height, std::uint8_t fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw DataError("image dimensions must be positive");
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels, fill);
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw DataError("image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * kChannels) {
    throw DataError("pixel buffer length does not match width*height*3");
  }
}

std::string_view variant_name(PreprocessVariant variant) {
  switch (variant) {
    case PreprocessVariant::Resize: return "resize";
    case PreprocessVariant::CenterCropOf2x: return "center_crop_2x";
    case PreprocessVariant::RandomCropOf2x: return "random_crop_2x";
  }
  return "?";
}

PreprocessVariant parse_variant(std::string_view name) {
  if (name == "resize") return PreprocessVariant::Resize;
  if (name == "center_crop_2x") return PreprocessVariant::CenterCropOf2x;
  if (name == "random_crop_2x") return PreprocessVariant::RandomCropOf2x;
  throw DataError("unknown preprocessing variant '" + std::string(name) + "'");
}

void InputSpec::validate() const {
  if (side < 32) throw DataError("input side must be at least 32 (got " + std::to_string(side) + ")");
}

int InputSpec::intermediate_side() const { return variant == PreprocessVariant::Resize ? side : 2 * side; }

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

// half-sample symmetric reflection: ... c b a | a b c ... c | c b a ...
int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

double sample_reflect(const RasterImage& img, double u, double v, int c) {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const double ax = u - fu;
  const double ay = v - fv;
  const int x0 = static_cast<int>(fu);
  const int y0 = static_cast<int>(fv);
  const int xa = reflect_index(x0, img.width());
  const int xb = reflect_index(x0 + 1, img.width());
  const int ya = reflect_index(y0, img.height());
  const int yb = reflect_index(y0 + 1, img.height());
  const double top = img.at(xa, ya, c) * (1.0 - ax) + img.at(xb, ya, c) * ax;
  const double bottom = img.at(xa, yb, c) * (1.0 - ax) + img.at(xb, yb, c) * ax;
  return top * (1.0 - ay) + bottom * ay;
}

// Resamples with an output->source coordinate map.
template <typename Map>
RasterImage warp(const RasterImage& img, Map&& map) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto [u, v] = map(static_cast<double>(x), static_cast<double>(y));
      for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = to_byte(sample_reflect(img, u, v, c));
    }
  }
  return out;
}

template <typename Fn>
RasterImage map_intensity(const RasterImage& img, Fn&& fn) {
  RasterImage out = img;
  for (auto& p : out.pixels()) p = to_byte(fn(static_cast<double>(p)));
  return out;
}

struct Point {
  double u;
  double v;
};

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

}  // namespace

RasterImage resize(const RasterImage& image, int width, int height) {
  if (width < 1 || height < 1) throw DataError("resize: target dimensions must be positive");
  if (width == image.width() && height == image.height()) return image;
  RasterImage out(width, height);
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  const int max_x = image.width() - 1;
  const int max_y = image.height() - 1;
  for (int y = 0; y < height; ++y) {
    const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(max_y));
    const int y0 = static_cast<int>(v);
    const int y1 = std::min(y0 + 1, max_y);
    const double ay = v - y0;
    for (int x = 0; x < width; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(max_x));
      const int x0 = static_cast<int>(u);
      const int x1 = std::min(x0 + 1, max_x);
      const double ax = u - x0;
      for (int c = 0; c < RasterImage::kChannels; ++c) {
        const double top = image.at(x0, y0, c) * (1.0 - ax) + image.at(x1, y0, c) * ax;
        const double bottom = image.at(x0, y1, c) * (1.0 - ax) + image.at(x1, y1, c) * ax;
        out.at(x, y, c) = to_byte(top * (1.0 - ay) + bottom * ay);
      }
    }
  }
  return out;
}

RasterImage resize(const RasterImage& image, int side) { return resize(image, side, side); }

CropOffset crop_offset(int width, int height, int side, const CropAnchor& anchor) {
  if (side < 1) throw DataError("crop: side must be positive");
  if (width < side || height < side) {
    throw DataError("crop: image " + std::to_string(width) + "x" + std::to_string(height) +
                    " is smaller than crop side " + std::to_string(side) + " (resize first)");
  }
  if (anchor.kind == CropAnchor::Kind::Center) return {(width - side) / 2, (height - side) / 2};
  Rng rng(anchor.seed);
  const int x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(width - side + 1)));
  const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(height - side + 1)));
  return {x, y};
}

RasterImage crop(const RasterImage& image, int side, const CropAnchor& anchor) {
  const auto off = crop_offset(image.width(), image.height(), side, anchor);
  RasterImage out(side, side);
  const std::size_t row_bytes = static_cast<std::size_t>(side) * RasterImage::kChannels;
  const auto src = image.pixels();
  auto dst = out.pixels();
  for (int y = 0; y < side; ++y) {
    const std::size_t from =
        (static_cast<std::size_t>(off.y + y) * static_cast<std::size_t>(image.width()) + static_cast<std::size_t>(off.x)) *
        RasterImage::kChannels;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), row_bytes,
                dst.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(y) * row_bytes));
  }
  return out;
}

RasterImage preprocess(const RasterImage& image, const InputSpec& spec, std::string_view image_id) {
  spec.validate();
  switch (spec.variant) {
    case PreprocessVariant::Resize:
      return resize(image, spec.side);
    case PreprocessVariant::CenterCropOf2x:
      return crop(resize(image, spec.intermediate_side()), spec.side, CropAnchor::center());
    case PreprocessVariant::RandomCropOf2x:
      return crop(resize(image, spec.intermediate_side()), spec.side, CropAnchor::random(fnv1a64(image_id)));
  }
  throw DataError("preprocess: unknown variant");
}

RasterImage preprocess_training(const RasterImage& image, const InputSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.variant != PreprocessVariant::RandomCropOf2x) return preprocess(image, spec, {});
  return crop(resize(image, spec.intermediate_side()), spec.side, CropAnchor::random(rng.next_u64()));
}

std::string_view distortion_name(Distortion d) {
  switch (d) {
    case Distortion::HorizontalFlip: return "horizontal_flip";
    case Distortion::VerticalFlip: return "vertical_flip";
    case Distortion::Shear: return "shear";
    case Distortion::Zoom: return "zoom";
    case Distortion::Rotation: return "rotation";
    case Distortion::WidthShift: return "width_shift";
    case Distortion::HeightShift: return "height_shift";
    case Distortion::ChannelShift: return "channel_shift";
    case Distortion::Brightness: return "brightness";
  }
  return "?";
}

void AugmentationParams::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw DataError(std::string("augmentation params: ") + what);
  };
  for (double v : {rotation_max, width_shift_max, height_shift_max, zoom_lo, zoom_hi, shear_max,
                   channel_shift_max, brightness_lo, brightness_hi, flip_probability}) {
    check(std::isfinite(v), "values must be finite");
  }
  check(rotation_max >= 0 && width_shift_max >= 0 && height_shift_max >= 0 && shear_max >= 0 &&
            channel_shift_max >= 0,
        "maxima must be non-negative");
  check(shear_max < 90.0, "shear_max must be below 90 degrees");
  check(zoom_lo > 0 && zoom_lo <= zoom_hi, "zoom range needs 0 < lo <= hi");
  check(brightness_lo > 0 && brightness_lo <= brightness_hi, "brightness range needs 0 < lo <= hi");
  check(flip_probability >= 0 && flip_probability <= 1, "flip_probability must be in [0, 1]");
}

void to_json(nlohmann::json& j, const AugmentationParams& p) {
  j = nlohmann::json{{"rotation_max", p.rotation_max},
                     {"width_shift_max", p.width_shift_max},
                     {"height_shift_max", p.height_shift_max},
                     {"zoom_range", {p.zoom_lo, p.zoom_hi}},
                     {"shear_max", p.shear_max},
                     {"channel_shift_max", p.channel_shift_max},
                     {"brightness_range", {p.brightness_lo, p.brightness_hi}},
                     {"flip_probability", p.flip_probability}};
}

void from_json(const nlohmann::json& j, AugmentationParams& p) {
  if (!j.is_object()) throw DataError("augmentation params: expected a JSON object");
  AugmentationParams out;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "rotation_max") out.rotation_max = value.get<double>();
      else if (key == "width_shift_max") out.width_shift_max = value.get<double>();
      else if (key == "height_shift_max") out.height_shift_max = value.get<double>();
      else if (key == "shear_max") out.shear_max = value.get<double>();
      else if (key == "channel_shift_max") out.channel_shift_max = value.get<double>();
      else if (key == "flip_probability") out.flip_probability = value.get<double>();
      else if (key == "zoom_range" || key == "brightness_range") {
        if (!value.is_array() || value.size() != 2) throw DataError("augmentation params: " + key + " needs [lo, hi]");
        const double lo = value[0].get<double>();
        const double hi = value[1].get<double>();
        if (key == "zoom_range") {
          out.zoom_lo = lo;
          out.zoom_hi = hi;
        } else {
          out.brightness_lo = lo;
          out.brightness_hi = hi;
        }
      } else {
        throw DataError("augmentation params: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("augmentation params: ") + e.what());
  }
  out.validate();
  p = out;
}

AugmentationLevel::AugmentationLevel(int level) : level_(level) {
  if (level < 1 || level > 4) throw DataError("augmentation level must be 1..4 (got " + std::to_string(level) + ")");
}

bool AugmentationLevel::enables(Distortion d) const {
  switch (d) {
    case Distortion::HorizontalFlip:
    case Distortion::VerticalFlip:
    case Distortion::Shear:
      return level_ >= 2;
    case Distortion::Zoom:
    case Distortion::Rotation:
    case Distortion::WidthShift:
    case Distortion::HeightShift:
      return level_ >= 3;
    case Distortion::ChannelShift:
    case Distortion::Brightness:
      return level_ >= 4;
  }
  return false;
}

std::vector<Distortion> AugmentationLevel::enabled() const {
  std::vector<Distortion> out;
  for (auto d : kAllDistortions) {
    if (enables(d)) out.push_back(d);
  }
  return out;
}

RasterImage apply_distortion(const RasterImage& image, Distortion distortion, double magnitude) {
  const double cx = (image.width() - 1) / 2.0;
  const double cy = (image.height() - 1) / 2.0;
  switch (distortion) {
    case Distortion::HorizontalFlip: {
      RasterImage out(image.width(), image.height());
      for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
          for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = image.at(image.width() - 1 - x, y, c);
      return out;
    }
    case Distortion::VerticalFlip: {
      RasterImage out(image.width(), image.height());
      for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x)
          for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = image.at(x, image.height() - 1 - y, c);
      return out;
    }
    case Distortion::Shear: {
      if (magnitude == 0.0) return image;
      const double t = std::tan(radians(magnitude));
      return warp(image, [&](double x, double y) { return Point{x + t * (y - cy), y}; });
    }
    case Distortion::Zoom: {
      if (!(magnitude > 0.0)) throw DataError("zoom factor must be positive");
      if (magnitude == 1.0) return image;
      return warp(image, [&](double x, double y) { return Point{(x - cx) / magnitude + cx, (y - cy) / magnitude + cy}; });
    }
    case Distortion::Rotation: {
      if (magnitude == 0.0) return image;
      const double s = std::sin(radians(magnitude));
      const double c = std::cos(radians(magnitude));
      return warp(image, [&](double x, double y) {
        const double dx = x - cx;
        const double dy = y - cy;
        return Point{c * dx + s * dy + cx, -s * dx + c * dy + cy};
      });
    }
    case Distortion::WidthShift: {
      if (magnitude == 0.0) return image;
      const double shift = magnitude * image.width();
      return warp(image, [&](double x, double y) { return Point{x - shift, y}; });
    }
    case Distortion::HeightShift: {
      if (magnitude == 0.0) return image;
      const double shift = magnitude * image.height();
      return warp(image, [&](double x, double y) { return Point{x, y - shift}; });
    }
    case Distortion::ChannelShift:
      return map_intensity(image, [&](double v) { return v + magnitude; });
    case Distortion::Brightness:
      if (magnitude < 0.0) throw DataError("brightness factor must be non-negative");
      return map_intensity(image, [&](double v) { return v * magnitude; });
  }
  throw DataError("unknown distortion");
}

RasterImage augment(const RasterImage& image, const AugmentationLevel& level, const AugmentationParams& params,
                    Rng& rng) {
  params.validate();
  RasterImage out = image;
  for (auto d : kAllDistortions) {
    if (!level.enables(d)) continue;
    switch (d) {
      case Distortion::HorizontalFlip:
      case Distortion::VerticalFlip:
        if (rng.bernoulli(params.flip_probability)) out = apply_distortion(out, d, 0.0);
        break;
      case Distortion::Shear:
        out = apply_distortion(out, d, rng.uniform(-params.shear_max, params.shear_max));
        break;
      case Distortion::Zoom:
        out = apply_distortion(out, d, rng.uniform(params.zoom_lo, params.zoom_hi));
        break;
      case Distortion::Rotation:
        out = apply_distortion(out, d, rng.uniform(-params.rotation_max, params.rotation_max));
        break;
      case Distortion::WidthShift:
        out = apply_distortion(out, d, rng.uniform(-params.width_shift_max, params.width_shift_max));
        break;
      case Distortion::HeightShift:
        out = apply_distortion(out, d, rng.uniform(-params.height_shift_max, params.height_shift_max));
        break;
      case Distortion::ChannelShift:
        out = apply_distortion(out, d, rng.uniform(-params.channel_shift_max, params.channel_shift_max));
        break;
      case Distortion::Brightness:
        out = apply_distortion(out, d, rng.uniform(params.brightness_lo, params.brightness_hi));
        break;
    }
  }
  return out;
}

}  // namespace artstyle
