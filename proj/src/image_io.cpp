#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstring>
#include <sstream>
#include <string>

#include "forge/error.hpp"
#include "forge/eval_render.hpp"
#include "forge/merl_io.hpp"

namespace forge {

namespace {

// Header tokens separated by whitespace; '#' comments allowed in PPM.
class HeaderScanner {
 public:
  explicit HeaderScanner(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty()) throw Error(ErrorKind::ParseError, "image header ended early");
    return out;
  }

  long long number() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const long long v = std::stoll(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "bad number in image header: " + t);
    }
  }

  double real() {
    const std::string t = token();
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "bad number in image header: " + t);
    }
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw Error(ErrorKind::ParseError, "image header not terminated");
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

ImageRGB read_pfm(const std::vector<std::uint8_t>& bytes) {
  HeaderScanner scan(bytes);
  const std::string magic = scan.token();
  if (magic != "PF") throw Error(ErrorKind::BadMagic, "only colour PFM (PF) is supported");
  const long long w = scan.number();
  const long long h = scan.number();
  const double scale = scan.real();
  if (w <= 0 || h <= 0) throw Error(ErrorKind::ParseError, "PFM dimensions must be positive");
  if (scale == 0.0) throw Error(ErrorKind::ParseError, "PFM scale must be nonzero");
  const bool little = scale < 0.0;
  const std::size_t start = scan.payload_start();
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3 * 4;
  if (bytes.size() - start != need) throw Error(ErrorKind::TruncatedFile, "PFM payload has the wrong length");

  ImageRGB img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  std::size_t at = start;
  for (std::size_t row = 0; row < img.height(); ++row) {
    const std::size_t y = img.height() - 1 - row;
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) {
          const std::uint32_t b = bytes[at + (little ? k : 3 - k)];
          u |= b << (8 * k);
        }
        at += 4;
        img.at(x, y)[c] = static_cast<double>(std::bit_cast<float>(u));
      }
    }
  }
  return img;
}

ImageRGB read_ppm(const std::vector<std::uint8_t>& bytes) {
  HeaderScanner scan(bytes);
  if (scan.token() != "P6") throw Error(ErrorKind::BadMagic, "only binary PPM (P6) is supported");
  const long long w = scan.number();
  const long long h = scan.number();
  const long long maxval = scan.number();
  if (w <= 0 || h <= 0) throw Error(ErrorKind::ParseError, "PPM dimensions must be positive");
  if (maxval <= 0 || maxval > 65535) throw Error(ErrorKind::ParseError, "PPM maxval out of range");
  const std::size_t start = scan.payload_start();
  const std::size_t width = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3 * width;
  if (bytes.size() - start != need) throw Error(ErrorKind::TruncatedFile, "PPM payload has the wrong length");

  ImageRGB img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  std::size_t at = start;
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        unsigned v = bytes[at++];
        if (width == 2) v = (v << 8) | bytes[at++];
        img.at(x, y)[c] = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> load_bytes(const std::filesystem::path& path) {
  const std::vector<std::byte> raw = read_file_bytes(path);
  std::vector<std::uint8_t> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void store_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  write_file_bytes(path, std::as_bytes(std::span(bytes)));
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const ImageRGB& img) {
  std::ostringstream header;
  header << "PF\n" << img.width() << ' ' << img.height() << "\n-1.0\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  bytes.reserve(bytes.size() + img.width() * img.height() * 12);
  for (std::size_t row = 0; row < img.height(); ++row) {
    const std::size_t y = img.height() - 1 - row;
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(img.at(x, y)[c]));
        for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
      }
    }
  }
  store_bytes(path, bytes);
}

void write_ppm(const std::filesystem::path& path, const ImageRGB& img) {
  std::ostringstream header;
  header << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(x, y)[c], 0.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  store_bytes(path, bytes);
}

ImageRGB read_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = load_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == 'F') return read_pfm(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(bytes);
  throw Error(ErrorKind::BadMagic, "unrecognised image format: " + path.string());
}

}  // namespace forge
