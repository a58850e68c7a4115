#include "onebev/image_io.hpp"

#include <png.h>

#include <cstring>
#include <string>

#include "onebev/errors.hpp"

namespace onebev {

namespace {

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : path_(path) {
    std::memset(&img_, 0, sizeof img_);
    img_.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img_, path.c_str())) {
      throw IoError("cannot read PNG " + path.string() + ": " + img_.message);
    }
  }
  ~PngReader() { png_image_free(&img_); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  bool is_color() const { return (img_.format & PNG_FORMAT_FLAG_COLOR) != 0; }

  Image finish(png_uint_32 format, int channels) {
    img_.format = format;
    Image out(static_cast<int>(img_.width), static_cast<int>(img_.height), channels);
    if (!png_image_finish_read(&img_, nullptr, out.pixels.data(), 0, nullptr)) {
      throw IoError("cannot decode PNG " + path_.string() + ": " + img_.message);
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  png_image img_;
};

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  PngReader reader(path);
  return reader.finish(PNG_FORMAT_RGB, 3);
}

Image read_png_gray(const std::filesystem::path& path) {
  PngReader reader(path);
  if (reader.is_color()) throw ValidationError("label raster " + path.string() + " is not single-channel");
  return reader.finish(PNG_FORMAT_GRAY, 1);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  require(image.channels == 1 || image.channels == 3, "write_png: only 1 or 3 channels are supported");
  require(image.width > 0 && image.height > 0, "write_png: empty image");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace onebev
