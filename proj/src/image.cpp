#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "ceemkit/dataset.hpp"

namespace ceemkit {

static std::vector<unsigned char> read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open file: " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

// -- PGM (binary P5, maxval 255) ---------------------------------------------

GrayImage decode_pgm(const std::vector<unsigned char> &bytes,
                     const std::string &origin) {
  std::size_t pos = 0;
  auto fail = [&](const std::string &why) {
    throw DecodeError(origin + ": " + why);
  };
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {  // comment to end of line
        while (pos < bytes.size() && bytes[pos] != '\n')
          ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      fail("malformed PGM header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]))
      v = v * 10 + (bytes[pos++] - '0');
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    fail("not a binary PGM (P5) file");
  pos = 2;
  const std::size_t w = read_int();
  const std::size_t h = read_int();
  const std::size_t maxval = read_int();
  if (maxval != 255)
    fail("only maxval 255 PGM supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    fail("malformed PGM header");
  ++pos;  // single whitespace before raster
  if (bytes.size() - pos < w * h)
    fail("truncated PGM raster");

  GrayImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(w * h);
  for (std::size_t i = 0; i < w * h; ++i)
    img.pixels[i] = static_cast<double>(bytes[pos + i]);
  return img;
}

void write_pgm(const std::string &path, const GrayImage &img) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write file: " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raster(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 255.0);
    raster[i] = static_cast<unsigned char>(std::lround(v));
  }
  out.write(reinterpret_cast<const char *>(raster.data()),
            static_cast<std::streamsize>(raster.size()));
  if (!out)
    throw IoError("write failure: " + path);
}

// -- PNG (8-bit gray / RGB, non-interlaced) ------------------------------------

static std::uint32_t be32(const unsigned char *p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

static int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc)
    return a;
  if (pb <= pc)
    return b;
  return c;
}

GrayImage decode_png(const std::vector<unsigned char> &bytes,
                     const std::string &origin) {
  auto fail = [&](const std::string &why) {
    throw DecodeError(origin + ": " + why);
  };
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                       '\n'};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    fail("not a PNG file");

  std::size_t pos = 8;
  std::size_t w = 0, h = 0, channels = 0;
  std::vector<unsigned char> idat;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 8 <= bytes.size() && !saw_iend) {
    const std::uint32_t len = be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size())
      fail("truncated chunk");
    const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
    const unsigned char *data = &bytes[pos + 8];
    if (type == "IHDR") {
      if (len != 13)
        fail("bad IHDR length");
      w = be32(data);
      h = be32(data + 4);
      const int depth = data[8], color = data[9];
      const int interlace = data[12];
      if (depth != 8)
        fail("only 8-bit PNG supported");
      if (color == 0)
        channels = 1;
      else if (color == 2)
        channels = 3;
      else
        fail("only grayscale and RGB PNG supported");
      if (interlace != 0)
        fail("interlaced PNG not supported");
      saw_ihdr = true;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      saw_iend = true;
    }
    // ancillary chunks skipped
    pos += 12 + len;
  }
  if (!saw_ihdr || w == 0 || h == 0)
    fail("missing IHDR");
  if (idat.empty())
    fail("missing IDAT");

  const std::size_t stride = w * channels;
  std::vector<unsigned char> raw((stride + 1) * h);
  uLongf raw_len = raw.size();
  if (uncompress(raw.data(), &raw_len, idat.data(), idat.size()) != Z_OK ||
      raw_len != raw.size())
    fail("IDAT inflate failed");

  std::vector<unsigned char> px(stride * h);
  const std::size_t bpp = channels;
  for (std::size_t y = 0; y < h; ++y) {
    const unsigned char filter = raw[y * (stride + 1)];
    const unsigned char *src = &raw[y * (stride + 1) + 1];
    unsigned char *dst = &px[y * stride];
    const unsigned char *up = y > 0 ? &px[(y - 1) * stride] : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= bpp ? dst[x - bpp] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= bpp) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
      case 0: break;
      case 1: v += a; break;
      case 2: v += b; break;
      case 3: v += (a + b) / 2; break;
      case 4: v += paeth(a, b, c); break;
      default: fail("unknown PNG filter type");
      }
      dst[x] = static_cast<unsigned char>(v);
    }
  }

  GrayImage img;
  img.height = h;
  img.width = w;
  img.pixels.resize(w * h);
  if (channels == 1) {
    for (std::size_t i = 0; i < w * h; ++i)
      img.pixels[i] = static_cast<double>(px[i]);
  } else {
    for (std::size_t i = 0; i < w * h; ++i) {
      const double r = px[3 * i], g = px[3 * i + 1], b = px[3 * i + 2];
      img.pixels[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    }
  }
  return img;
}

static void put_be32(std::vector<unsigned char> &v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

static void write_chunk(std::ofstream &out, const char type[4],
                        const std::vector<unsigned char> &data) {
  std::vector<unsigned char> buf;
  put_be32(buf, static_cast<std::uint32_t>(data.size()));
  buf.insert(buf.end(), type, type + 4);
  buf.insert(buf.end(), data.begin(), data.end());
  const uLong crc =
      crc32(0, buf.data() + 4, static_cast<uInt>(buf.size() - 4));
  put_be32(buf, static_cast<std::uint32_t>(crc));
  out.write(reinterpret_cast<const char *>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

void write_png(const std::string &path, const GrayImage &img) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write file: " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                       '\n'};
  out.write(reinterpret_cast<const char *>(sig), 8);

  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  write_chunk(out, "IHDR", ihdr);

  std::vector<unsigned char> raw((img.width + 1) * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    raw[y * (img.width + 1)] = 0;  // filter None
    for (std::size_t x = 0; x < img.width; ++x) {
      const double v = std::clamp(img.at(y, x), 0.0, 255.0);
      raw[y * (img.width + 1) + 1 + x] =
          static_cast<unsigned char>(std::lround(v));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("PNG deflate failed: " + path);
  compressed.resize(bound);
  write_chunk(out, "IDAT", compressed);
  write_chunk(out, "IEND", {});
  if (!out)
    throw IoError("write failure: " + path);
}

void write_image(const std::string &path, const GrayImage &img) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    write_png(path, img);
  else
    write_pgm(path, img);
}

GrayImage decode_image(const std::string &path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
    return decode_pgm(bytes, path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P')
    return decode_png(bytes, path);
  throw DecodeError(path + ": unrecognized image format");
}

GrayImage resize_bilinear(const GrayImage &img, std::size_t out_h,
                          std::size_t out_w) {
  if (out_h == img.height && out_w == img.width)
    return img;
  GrayImage out;
  out.height = out_h;
  out.width = out_w;
  out.pixels.resize(out_h * out_w);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      out.at(y, x) = (1 - wy) * ((1 - wx) * img.at(y0, x0) +
                                 wx * img.at(y0, x1)) +
                     wy * ((1 - wx) * img.at(y1, x0) + wx * img.at(y1, x1));
    }
  }
  return out;
}

Tensor image_to_tensor(const GrayImage &img) {
  Tensor t({1, img.height, img.width, 1});
  std::copy(img.pixels.begin(), img.pixels.end(), t.data());
  return t;
}

GrayImage tensor_to_image(const Tensor &t) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(3) != 1)
    throw ShapeError("tensor_to_image expects [1,H,W,1]");
  GrayImage img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.pixels.assign(t.data(), t.data() + t.size());
  return img;
}

} // namespace ceemkit
