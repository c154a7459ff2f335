#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <jpeglib.h>

#include "artstyle/image_io.hpp"
#include "artstyle/imageproc.hpp"
#include "fixtures.hpp"

using namespace artstyle;

namespace {

// Independent half-pixel-centre bilinear resampler.
RasterImage reference_resize(const RasterImage& src, int w, int h) {
  RasterImage out(w, h);
  const double sx = static_cast<double>(src.width()) / w;
  const double sy = static_cast<double>(src.height()) / h;
  for (int y = 0; y < h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0, c) * (1 - tx) + src.at(x1, y0, c) * tx;
        const double bottom = src.at(x0, y1, c) * (1 - tx) + src.at(x1, y1, c) * tx;
        out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bottom * ty));
      }
    }
  }
  return out;
}

int max_abs_diff(const RasterImage& a, const RasterImage& b) {
  REQUIRE(a.width() == b.width());
  REQUIRE(a.height() == b.height());
  int worst = 0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) worst = std::max(worst, std::abs(a.pixels()[i] - b.pixels()[i]));
  return worst;
}

RasterImage transform(const RasterImage& img, auto&& source_of) {
  RasterImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const auto [sx, sy] = source_of(x, y);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const RasterImage& img) {
  jpeg_compress_struct cinfo{};
  jpeg_error_mgr jerr{};
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 95, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * 3);
  while (cinfo.next_scanline < cinfo.image_height) {
    const auto y = static_cast<int>(cinfo.next_scanline);
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = img.at(x, y, c);
    JSAMPROW ptr = row.data();
    jpeg_write_scanlines(&cinfo, &ptr, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(buffer, buffer + size);
  jpeg_destroy_compress(&cinfo);
  std::free(buffer);
  return out;
}

AugmentationParams neutral_params() {
  AugmentationParams p;
  p.rotation_max = 0;
  p.width_shift_max = 0;
  p.height_shift_max = 0;
  p.zoom_lo = p.zoom_hi = 1.0;
  p.shear_max = 0;
  p.channel_shift_max = 0;
  p.brightness_lo = p.brightness_hi = 1.0;
  p.flip_probability = 0;
  return p;
}

}  // namespace

TEST_CASE("resize matches reference bilinear sampler") {
  const auto img = fixtures::random_image(37, 23, 1);
  for (auto [w, h] : {std::pair{37, 23}, {64, 64}, {10, 50}, {74, 46}, {5, 5}}) {
    CAPTURE(w);
    CAPTURE(h);
    CHECK(max_abs_diff(resize(img, w, h), reference_resize(img, w, h)) <= 1);
  }
  CHECK(resize(img, 37, 23) == img);
  const RasterImage flat(13, 7, 99);
  CHECK(resize(flat, 40) == RasterImage(40, 40, 99));
}

TEST_CASE("crop offsets and sizes") {
  CHECK(crop_offset(100, 80, 40, CropAnchor::center()) == CropOffset{30, 20});
  const auto img = fixtures::random_image(20, 16, 2);
  const auto c = crop(img, 8, CropAnchor::center());
  CHECK(c.width() == 8);
  CHECK(c.at(0, 0, 1) == img.at(6, 4, 1));
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto off = crop_offset(20, 16, 8, CropAnchor::random(s));
    CHECK(off.x >= 0);
    CHECK(off.x <= 12);
    CHECK(off.y >= 0);
    CHECK(off.y <= 8);
    CHECK(off == crop_offset(20, 16, 8, CropAnchor::random(s)));
  }
  CHECK_THROWS_AS(crop(img, 17, CropAnchor::center()), DataError);
}

TEST_CASE("preprocess variants") {
  const auto img = fixtures::random_image(640, 480, 3);
  for (auto v : {PreprocessVariant::Resize, PreprocessVariant::CenterCropOf2x, PreprocessVariant::RandomCropOf2x}) {
    const InputSpec spec{299, v};
    CHECK(spec.intermediate_side() == (v == PreprocessVariant::Resize ? 299 : 598));
    const auto out = preprocess(img, spec, "img-7");
    CHECK(out.width() == 299);
    CHECK(out.height() == 299);
    CHECK(out == preprocess(img, spec, "img-7"));
    CHECK(parse_variant(variant_name(v)) == v);
  }
  // center crop of the 2x intermediate is the centre patch of the resized image
  const InputSpec center{64, PreprocessVariant::CenterCropOf2x};
  CHECK(preprocess(img, center, "x") == crop(resize(img, 128), 64, CropAnchor::center()));
  CHECK(preprocess(img, InputSpec{64, PreprocessVariant::Resize}, "x") == resize(img, 64));

  const InputSpec random{64, PreprocessVariant::RandomCropOf2x};
  Rng rng(4);
  bool varied = false;
  const auto first = preprocess_training(img, random, rng);
  for (int i = 0; i < 10; ++i) varied = varied || !(preprocess_training(img, random, rng) == first);
  CHECK(varied);
  CHECK_THROWS(InputSpec{16, PreprocessVariant::Resize}.validate());
  CHECK_THROWS(parse_variant("stretch"));
}

TEST_CASE("flips match index mapping and are involutions") {
  const auto img = fixtures::random_image(9, 6, 5);
  const auto h = apply_distortion(img, Distortion::HorizontalFlip, 0);
  const auto v = apply_distortion(img, Distortion::VerticalFlip, 0);
  CHECK(h == transform(img, [&](int x, int y) { return std::pair{img.width() - 1 - x, y}; }));
  CHECK(v == transform(img, [&](int x, int y) { return std::pair{x, img.height() - 1 - y}; }));
  CHECK(apply_distortion(h, Distortion::HorizontalFlip, 0) == img);
  CHECK(apply_distortion(v, Distortion::VerticalFlip, 0) == img);
}

TEST_CASE("zero-magnitude distortions are identities") {
  const auto img = fixtures::random_image(17, 11, 6);
  CHECK(apply_distortion(img, Distortion::Shear, 0) == img);
  CHECK(apply_distortion(img, Distortion::Rotation, 0) == img);
  CHECK(apply_distortion(img, Distortion::Zoom, 1) == img);
  CHECK(apply_distortion(img, Distortion::WidthShift, 0) == img);
  CHECK(apply_distortion(img, Distortion::HeightShift, 0) == img);
  CHECK(apply_distortion(img, Distortion::ChannelShift, 0) == img);
  CHECK(apply_distortion(img, Distortion::Brightness, 1) == img);
}

TEST_CASE("quarter-turn rotation permutes pixels") {
  const auto img = fixtures::random_image(15, 15, 7);
  const auto r = apply_distortion(img, Distortion::Rotation, 90);
  const int n = img.width() - 1;
  const auto cw = transform(img, [&](int x, int y) { return std::pair{y, n - x}; });
  const auto ccw = transform(img, [&](int x, int y) { return std::pair{n - y, x}; });
  CHECK(std::min(max_abs_diff(r, cw), max_abs_diff(r, ccw)) <= 1);
}

TEST_CASE("integer shifts translate interior pixels") {
  const auto img = fixtures::random_image(20, 10, 8);
  const auto s = apply_distortion(img, Distortion::WidthShift, 0.25);  // five pixels
  bool right = true, left = true;
  for (int y = 0; y < 10; ++y)
    for (int x = 5; x < 15; ++x)
      for (int c = 0; c < 3; ++c) {
        right = right && std::abs(s.at(x, y, c) - img.at(x - 5, y, c)) <= 1;
        left = left && std::abs(s.at(x, y, c) - img.at(x + 5, y, c)) <= 1;
      }
  CHECK((right || left));
}

TEST_CASE("intensity distortions clamp") {
  RasterImage img(4, 4, 250);
  img.at(0, 0, 0) = 3;
  const auto up = apply_distortion(img, Distortion::ChannelShift, 20);
  CHECK(up.at(1, 1, 2) == 255);
  CHECK(up.at(0, 0, 0) == 23);
  const auto down = apply_distortion(img, Distortion::ChannelShift, -20);
  CHECK(down.at(0, 0, 0) == 0);
  CHECK(down.at(1, 1, 1) == 230);
  const auto bright = apply_distortion(img, Distortion::Brightness, 1.2);
  CHECK(bright.at(1, 1, 0) == 255);
  CHECK(std::abs(bright.at(0, 0, 0) - 4) <= 1);
  const auto dark = apply_distortion(img, Distortion::Brightness, 0.5);
  CHECK(dark.at(1, 1, 0) == 125);
}

TEST_CASE("augmentation levels enable the expected distortions") {
  using D = Distortion;
  CHECK(AugmentationLevel(1).enabled().empty());
  CHECK(AugmentationLevel(2).enabled() == std::vector<D>{D::HorizontalFlip, D::VerticalFlip, D::Shear});
  CHECK(AugmentationLevel(3).enabled() == std::vector<D>{D::HorizontalFlip, D::VerticalFlip, D::Shear, D::Zoom,
                                                         D::Rotation, D::WidthShift, D::HeightShift});
  CHECK(AugmentationLevel(4).enabled().size() == 9);
  for (int l = 1; l < 4; ++l)
    for (auto d : kAllDistortions)
      if (AugmentationLevel(l).enables(d)) CHECK(AugmentationLevel(l + 1).enables(d));
  CHECK_THROWS(AugmentationLevel(0));
  CHECK_THROWS(AugmentationLevel(5));
}

TEST_CASE("level 1 is the identity and leaves the generator untouched") {
  const auto img = fixtures::random_image(33, 21, 9);
  Rng a(10), b(10);
  CHECK(augment(img, AugmentationLevel(1), {}, a) == img);
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("neutral ranges make every level an identity") {
  const auto img = fixtures::random_image(24, 24, 11);
  Rng rng(12);
  for (int l = 1; l <= 4; ++l) CHECK(augment(img, AugmentationLevel(l), neutral_params(), rng) == img);
}

TEST_CASE("augmentation is reproducible per seed") {
  const auto img = fixtures::random_image(32, 32, 13);
  Rng a(14), b(14), c(15);
  const auto x = augment(img, AugmentationLevel(4), {}, a);
  CHECK(x == augment(img, AugmentationLevel(4), {}, b));
  CHECK_FALSE(x == augment(img, AugmentationLevel(4), {}, c));
  CHECK(x.width() == 32);
}

TEST_CASE("augmentation params json") {
  AugmentationParams p;
  p.rotation_max = 30;
  p.zoom_lo = 0.5;
  nlohmann::json j = p;
  CHECK(j.at("zoom_range") == nlohmann::json::array({0.5, 1.1}));
  CHECK(j.get<AugmentationParams>() == p);
  const auto partial = nlohmann::json::parse(R"({"rotation_max": 5})").get<AugmentationParams>();
  CHECK(partial.rotation_max == 5);
  CHECK(partial.shear_max == AugmentationParams{}.shear_max);
  CHECK_THROWS(nlohmann::json::parse(R"({"rotation": 5})").get<AugmentationParams>());
  AugmentationParams bad;
  bad.zoom_lo = 2.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("png round-trip and format sniffing") {
  const auto img = fixtures::random_image(31, 17, 16);
  const auto bytes = encode_png(img);
  CHECK(decode_image(bytes) == img);
  fixtures::TempDir dir("png");
  save_png(img, dir / "a.png");
  CHECK(load_image(dir / "a.png") == img);
  const std::vector<std::uint8_t> junk = {'n', 'o', 't', ' ', 'a', 'n', ' ', 'i', 'm', 'a', 'g', 'e'};
  CHECK_THROWS_AS(decode_image(junk), DataError);
  auto truncated = bytes;
  truncated.resize(40);
  CHECK_THROWS_AS(decode_image(truncated), DataError);
}

TEST_CASE("jpeg decoding") {
  RasterImage img(24, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x) {
      img.at(x, y, 0) = 200;
      img.at(x, y, 1) = 40;
      img.at(x, y, 2) = 90;
    }
  const auto bytes = encode_jpeg(img);
  const auto back = decode_image(bytes);
  CHECK(back.width() == 24);
  CHECK(back.height() == 16);
  CHECK(max_abs_diff(back, img) <= 4);
  auto truncated = bytes;
  truncated.resize(20);
  CHECK_THROWS_AS(decode_image(truncated), DataError);
}
