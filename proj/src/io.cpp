#include "cdcn/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cdcn/errors.hpp"

namespace cdcn {

namespace fs = std::filesystem;

Image read_png(const fs::path& path) {
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&info, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + info.message);
  }
  const bool gray = (info.format & PNG_FORMAT_FLAG_COLOR) == 0;
  info.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(info));
  if (!png_image_finish_read(&info, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = info.message;
    png_image_free(&info);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
  }
  const int channels = gray ? 1 : 3;
  Image img(static_cast<int>(info.height), static_cast<int>(info.width), channels);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) = buffer[(static_cast<std::size_t>(y) * img.width() + x) * channels + c] / 255.0;
  return img;
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png(const fs::path& path, const Image& img) {
  require(img.channels() == 1 || img.channels() == 3, "PNG export needs 1 or 3 channels");
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(img.width());
  info.height = static_cast<png_uint_32>(img.height());
  info.format = img.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(info));
  const int channels = img.channels();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c)
        buffer[(static_cast<std::size_t>(y) * img.width() + x) * channels + c] = to_byte(img.at(y, x, c));
  if (!png_image_write_to_file(&info, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + info.message);
  }
}

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (double& v : out.values()) v = to_byte(v) / 255.0;
  return out;
}

std::string format_kernel(const Kernel& kernel) {
  std::ostringstream os;
  os << kernel.size() << ' ' << (kernel.description().empty() ? "custom" : kernel.description())
     << '\n';
  os << std::setprecision(17);
  for (int i = 0; i < kernel.size(); ++i) {
    for (int j = 0; j < kernel.size(); ++j) {
      if (j) os << ' ';
      os << kernel(i, j);
    }
    os << '\n';
  }
  return os.str();
}

Kernel parse_kernel(const std::string& text) {
  std::istringstream is(text);
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  int size = 0;
  std::string description;
  if (!(hs >> size) || size < 1 || size % 2 == 0) {
    throw ValidationError("kernel file: bad header line '" + header + "'");
  }
  hs >> description;
  std::vector<double> values(static_cast<std::size_t>(size) * size);
  for (double& v : values) {
    if (!(is >> v)) throw ValidationError("kernel file: expected " + std::to_string(size * size) + " values");
  }
  return Kernel::from_signed(size, std::move(values), description);
}

void write_kernel(const fs::path& path, const Kernel& kernel) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_kernel(kernel);
}

Kernel read_kernel(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open kernel file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kernel(ss.str());
}

static_assert(std::endian::native == std::endian::little, "float dumps assume little-endian hosts");

void write_f32(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "CDCNF32 " << img.height() << ' ' << img.width() << ' ' << img.channels() << '\n';
  std::vector<float> payload(img.values().begin(), img.values().end());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

Image read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string magic;
  int h = 0, w = 0, c = 0;
  if (!(hs >> magic >> h >> w >> c) || magic != "CDCNF32") {
    throw ArtifactMismatch(path.string() + " is not a CDCNF32 array");
  }
  Image img(h, w, c);
  std::vector<float> payload(img.size());
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!in) throw ArtifactMismatch(path.string() + ": truncated payload");
  std::copy(payload.begin(), payload.end(), img.values().begin());
  return img;
}

std::vector<fs::path> list_png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace cdcn
