#include "makeup/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "makeup/error.hpp"

namespace makeup {

namespace {

cv::Mat decode_mat(const Bytes& bytes, int flags) {
  if (bytes.empty()) throw Error(ErrorKind::kIo, "empty image data");
  if (sniff_image_format(bytes).empty()) throw Error(ErrorKind::kIo, "expected PNG or JPEG data");
  cv::Mat mat;
  try {
    mat = cv::imdecode(cv::Mat(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data())),
                       flags);
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::kIo, std::string("image decode failed: ") + e.what());
  }
  if (mat.empty()) throw Error(ErrorKind::kIo, "unsupported or corrupt image data");
  return mat;
}

Bytes encode_mat(const cv::Mat& mat) {
  std::vector<uchar> out;
  if (!cv::imencode(".png", mat, out)) throw Error(ErrorKind::kIo, "PNG encoding failed");
  return Bytes(out.begin(), out.end());
}

}  // namespace

RasterImage decode_image(const Bytes& bytes) {
  cv::Mat mat = decode_mat(bytes, cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  const double scale = mat.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  if (mat.depth() != CV_8U && mat.depth() != CV_16U) throw Error(ErrorKind::kIo, "unsupported image bit depth");
  cv::Mat rgb;
  cv::cvtColor(mat, rgb, cv::COLOR_BGR2RGB);
  cv::Mat real;
  rgb.convertTo(real, CV_64FC3, scale);
  RasterImage image(real.rows, real.cols);
  for (int y = 0; y < real.rows; ++y) {
    const auto* row = real.ptr<cv::Vec3d>(y);
    for (int x = 0; x < real.cols; ++x) image.set_pixel(y, x, {row[x][0], row[x][1], row[x][2]});
  }
  return image;
}

RasterImage read_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

Bytes encode_png(const RasterImage& image) {
  if (image.height() == 0 || image.width() == 0) throw Error(ErrorKind::kIo, "cannot encode an empty image");
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        row[x][2 - c] = static_cast<uchar>(std::lround(v * 255.0));
      }
    }
  }
  return encode_mat(bgr);
}

void write_image(const std::filesystem::path& path, const RasterImage& image) {
  write_file(path, encode_png(image));
}

Grid<std::uint8_t> decode_label_grid(const Bytes& bytes) {
  cv::Mat mat = decode_mat(bytes, cv::IMREAD_UNCHANGED);
  if (mat.depth() != CV_8U) throw Error(ErrorKind::kIo, "label map must be 8-bit");
  if (mat.channels() == 3 || mat.channels() == 4) {
    std::vector<cv::Mat> ch;
    cv::split(mat, ch);
    if (cv::countNonZero(ch[0] != ch[1]) || cv::countNonZero(ch[0] != ch[2])) {
      throw Error(ErrorKind::kIo, "label map must be single-channel (channels disagree)");
    }
    mat = ch[0];
  } else if (mat.channels() != 1) {
    throw Error(ErrorKind::kIo, "label map must be single-channel");
  }
  Grid<std::uint8_t> grid(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    std::copy(mat.ptr<std::uint8_t>(y), mat.ptr<std::uint8_t>(y) + mat.cols, &grid.at(y, 0));
  }
  return grid;
}

Grid<std::uint8_t> read_label_grid(const std::filesystem::path& path) {
  return decode_label_grid(read_file(path));
}

Bytes encode_label_png(const Grid<std::uint8_t>& grid) {
  cv::Mat mat(grid.height, grid.width, CV_8U);
  std::copy(grid.values.begin(), grid.values.end(), mat.data);
  return encode_mat(mat);
}

Bytes encode_mask_png(const SoftMask& mask) {
  cv::Mat mat(mask.height(), mask.width(), CV_8U);
  for (std::size_t i = 0; i < mask.weights.size(); ++i) {
    mat.data[i] = static_cast<uchar>(std::lround(std::clamp(mask.weights.values[i], 0.0, 1.0) * 255.0));
  }
  return encode_mat(mat);
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

std::string sniff_image_format(const Bytes& bytes) {
  static const std::uint8_t png[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::equal(png, png + 8, bytes.begin())) return "png";
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return "jpeg";
  return "";
}

std::pair<int, int> png_dimensions(const Bytes& bytes) {
  if (sniff_image_format(bytes) != "png" || bytes.size() < 24) return {0, 0};
  auto be32 = [&](std::size_t off) {
    return static_cast<int>((std::uint32_t(bytes[off]) << 24) | (std::uint32_t(bytes[off + 1]) << 16) |
                            (std::uint32_t(bytes[off + 2]) << 8) | std::uint32_t(bytes[off + 3]));
  };
  return {be32(16), be32(20)};
}

}  // namespace makeup
