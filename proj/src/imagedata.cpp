#include "tseg/imagedata.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>

namespace tseg {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "missing file";
    case ErrorCode::MultiChannel: return "multi-channel input";
    case ErrorCode::CorruptHeader: return "corrupt header";
    case ErrorCode::UnsupportedFormat: return "unsupported format";
    case ErrorCode::Unwritable: return "unwritable path";
    case ErrorCode::LabelOverflow: return "label overflow";
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::UndefinedField: return "undefined field";
    case ErrorCode::NotSquare: return "non-square input";
    case ErrorCode::ChannelMismatch: return "channel mismatch";
    case ErrorCode::OddSpatialDims: return "odd spatial dimensions";
    case ErrorCode::IndivisibleDims: return "spatial dimensions not divisible by 16";
    case ErrorCode::RunningStatsUnset: return "running statistics unset";
    case ErrorCode::StaleCache: return "stale forward cache";
    case ErrorCode::UntrainedModel: return "untrained model";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::BadVersion: return "unsupported version";
    case ErrorCode::Truncated: return "truncated file";
    case ErrorCode::ArchitectureMismatch: return "architecture mismatch";
    case ErrorCode::EmptyDataset: return "empty dataset";
    case ErrorCode::EmptySet: return "empty set";
    case ErrorCode::RejectionSampling: return "rejection sampling failed";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Config: return "configuration error";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Raster types

GrayImage::GrayImage(Eigen::Index height, Eigen::Index width, float fill)
    : data_(Plane<float>::Constant(height, width, fill)) {
  if (!(fill >= 0.0f && fill <= 1.0f)) {
    throw Error(ErrorCode::InvalidArgument, "GrayImage: fill value outside [0,1]");
  }
}

GrayImage::GrayImage(Plane<float> data) : data_(std::move(data)) {
  // NaN fails both comparisons.
  if (!((data_ >= 0.0f) && (data_ <= 1.0f)).all()) {
    throw Error(ErrorCode::InvalidArgument, "GrayImage: values must be finite and in [0,1]");
  }
}

GrayImage GrayImage::clamped(const Plane<float>& data) {
  Plane<float> out = data.unaryExpr([](float v) { return std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f); });
  return GrayImage(std::move(out));
}

ImageStack::ImageStack(std::vector<GrayImage> planes) : planes_(std::move(planes)) {
  if (planes_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "ImageStack: depth must be >= 1");
  }
  for (const auto& p : planes_) {
    if (p.height() != planes_.front().height() || p.width() != planes_.front().width()) {
      throw Error(ErrorCode::ShapeMismatch, "ImageStack: planes differ in size");
    }
  }
}

BinaryMask::BinaryMask(Eigen::Index height, Eigen::Index width)
    : data_(Plane<std::uint8_t>::Zero(height, width)) {}

BinaryMask::BinaryMask(Plane<std::uint8_t> data) : data_(std::move(data)) {
  if (!(data_ <= 1).all()) {
    throw Error(ErrorCode::InvalidArgument, "BinaryMask: values must be 0 or 1");
  }
}

Plane<std::int32_t> compact_labels(const Plane<std::int32_t>& labels) {
  if ((labels < 0).any()) {
    throw Error(ErrorCode::InvalidArgument, "InstanceMask: negative label");
  }
  std::map<std::int32_t, std::int32_t> remap;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels.data()[i] > 0) remap.emplace(labels.data()[i], 0);
  }
  std::int32_t next = 1;
  for (auto& [from, to] : remap) to = next++;
  Plane<std::int32_t> out(labels.rows(), labels.cols());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const auto v = labels.data()[i];
    out.data()[i] = v == 0 ? 0 : remap[v];
  }
  return out;
}

InstanceMask::InstanceMask(Eigen::Index height, Eigen::Index width)
    : labels_(Plane<std::int32_t>::Zero(height, width)) {}

InstanceMask::InstanceMask(const Plane<std::int32_t>& labels)
    : labels_(compact_labels(labels)), count_(labels_.size() ? labels_.maxCoeff() : 0) {}

std::vector<Eigen::Index> InstanceMask::areas() const {
  std::vector<Eigen::Index> a(static_cast<std::size_t>(count_) + 1, 0);
  for (Eigen::Index i = 0; i < labels_.size(); ++i) ++a[static_cast<std::size_t>(labels_.data()[i])];
  return a;
}

BinaryMask InstanceMask::binarize() const { return BinaryMask((labels_ > 0).cast<std::uint8_t>()); }

BinaryMask InstanceMask::object(std::int32_t label) const {
  return BinaryMask((labels_ == label).cast<std::uint8_t>());
}

// ---------------------------------------------------------------------------
// File I/O

namespace {

struct RawRaster {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  int bit_depth = 8;
  std::uint32_t max_value = 255;
  std::vector<std::uint16_t> samples;
};

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RawRaster read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());

  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::CorruptHeader, "not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::CorruptHeader, "libpng initialization failed");
  }

  RawRaster raw;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::CorruptHeader, "corrupt PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::MultiChannel, "expected single-channel grayscale PNG: " + path.string());
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);

  raw.width = png_get_image_width(png, info);
  raw.height = png_get_image_height(png, info);
  raw.bit_depth = depth == 16 ? 16 : 8;
  raw.max_value = depth == 16 ? 65535u : 255u;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(raw.height));
  rows.resize(static_cast<std::size_t>(raw.height));
  for (Eigen::Index y = 0; y < raw.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  raw.samples.resize(static_cast<std::size_t>(raw.height * raw.width));
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    if (raw.bit_depth == 16) {
      std::uint16_t v;
      std::memcpy(&v, buffer.data() + 2 * i, 2);
      raw.samples[i] = v;
    } else {
      raw.samples[i] = buffer[i];
    }
  }
  return raw;
}

RawRaster read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());

  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {}
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };

  const std::string magic = next_token();
  if (magic == "P6" || magic == "P3") {
    throw Error(ErrorCode::MultiChannel, "expected single-channel PGM: " + path.string());
  }
  if (magic != "P5") throw Error(ErrorCode::CorruptHeader, "not a binary PGM: " + path.string());

  RawRaster raw;
  try {
    raw.width = std::stol(next_token());
    raw.height = std::stol(next_token());
    raw.max_value = static_cast<std::uint32_t>(std::stoul(next_token()));
  } catch (const std::exception&) {
    throw Error(ErrorCode::CorruptHeader, "malformed PGM header: " + path.string());
  }
  if (raw.width <= 0 || raw.height <= 0 || raw.max_value == 0 || raw.max_value > 65535) {
    throw Error(ErrorCode::CorruptHeader, "invalid PGM header values: " + path.string());
  }
  raw.bit_depth = raw.max_value > 255 ? 16 : 8;
  const std::size_t n = static_cast<std::size_t>(raw.width * raw.height);
  const std::size_t bytes = n * (raw.bit_depth == 16 ? 2 : 1);
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw Error(ErrorCode::CorruptHeader, "truncated PGM data: " + path.string());
  }
  raw.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw.samples[i] = raw.bit_depth == 16 ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1])
                                         : buf[i];
  }
  return raw;
}

RawRaster read_raster(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, "no such file: " + path.string());
  if (has_extension(path, ".pgm")) return read_pgm(path);
  return read_png(path);
}

void write_png(const std::filesystem::path& path, Eigen::Index height, Eigen::Index width,
               int bit_depth, int color_type, const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::Unwritable, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::Unwritable, "libpng initialization failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Unwritable, "PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (Eigen::Index y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(bytes.data()) + y * rowbytes;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_gray_samples(const std::filesystem::path& path, Eigen::Index height, Eigen::Index width,
                        int bit_depth, const std::vector<std::uint16_t>& samples) {
  if (has_extension(path, ".pgm")) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Unwritable, "cannot write " + path.string());
    out << "P5\n" << width << ' ' << height << '\n' << (bit_depth == 16 ? 65535 : 255) << '\n';
    for (auto v : samples) {
      if (bit_depth == 16) out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    }
    if (!out) throw Error(ErrorCode::Unwritable, "write failed: " + path.string());
    return;
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(samples.size() * (bit_depth / 8));
  for (auto v : samples) {
    if (bit_depth == 16) {
      bytes.push_back(static_cast<std::uint8_t>(v >> 8));  // PNG is big-endian
      bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
    } else {
      bytes.push_back(static_cast<std::uint8_t>(v));
    }
  }
  write_png(path, height, width, bit_depth, PNG_COLOR_TYPE_GRAY, bytes);
}

}  // namespace

GrayImage load_gray(const std::filesystem::path& path) {
  const RawRaster raw = read_raster(path);
  Plane<float> data(raw.height, raw.width);
  const double scale = 1.0 / raw.max_value;
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    data.data()[i] = static_cast<float>(std::min(1.0, raw.samples[i] * scale));
  }
  return GrayImage(std::move(data));
}

void save_gray(const GrayImage& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorCode::InvalidArgument, "bit depth must be 8 or 16");
  }
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(img.data().size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Round half up.
    samples[i] = static_cast<std::uint16_t>(std::floor(static_cast<double>(img.data().data()[i]) * maxv + 0.5));
  }
  write_gray_samples(path, img.height(), img.width(), bit_depth, samples);
}

InstanceMask load_instance_mask(const std::filesystem::path& path) {
  const RawRaster raw = read_raster(path);
  Plane<std::int32_t> labels(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) labels.data()[i] = raw.samples[i];
  return InstanceMask(labels);
}

void save_instance_mask(const InstanceMask& mask, const std::filesystem::path& path) {
  if (mask.count() > 65535) {
    throw Error(ErrorCode::LabelOverflow, "instance labels exceed 65535");
  }
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(mask.labels().size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = static_cast<std::uint16_t>(mask.labels().data()[i]);
  }
  write_gray_samples(path, mask.height(), mask.width(), 16, samples);
}

BinaryMask load_binary_mask(const std::filesystem::path& path) {
  const RawRaster raw = read_raster(path);
  Plane<std::uint8_t> data(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) data.data()[i] = raw.samples[i] > 0 ? 1 : 0;
  return BinaryMask(std::move(data));
}

void save_binary_mask(const BinaryMask& mask, const std::filesystem::path& path) {
  save_instance_mask(InstanceMask(mask.data().cast<std::int32_t>()), path);
}

void save_rgb(const Plane<std::uint8_t>& rgb, const std::filesystem::path& path) {
  if (rgb.cols() % 3 != 0) throw Error(ErrorCode::InvalidArgument, "RGB plane width must be a multiple of 3");
  std::vector<std::uint8_t> bytes(rgb.data(), rgb.data() + rgb.size());
  write_png(path, rgb.rows(), rgb.cols() / 3, 8, PNG_COLOR_TYPE_RGB, bytes);
}

}  // namespace tseg
