#include "image_io.hpp"

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

namespace segplex::tools {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw input_error("cannot decode PNG '" + name + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw input_error("cannot decode PNG '" + name + "': " + image.message);
  }
  return gray_from_8bit(static_cast<int>(image.height), static_cast<int>(image.width), 3, buf);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

GrayImage decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  // Locals touched after setjmp are declared before it.
  std::vector<std::uint8_t> pixels;
  int height = 0, width = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw input_error("cannot decode JPEG '" + name + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = static_cast<int>(cinfo.output_height);
  width = static_cast<int>(cinfo.output_width);
  const auto stride = static_cast<std::size_t>(width) * 3;
  pixels.resize(stride * static_cast<std::size_t>(height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + stride * cinfo.output_scanline;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return gray_from_8bit(height, width, 3, pixels);
}

// P2/P3 (ASCII) and P5/P6 (binary), maxval up to 65535.
GrayImage decode_netpbm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto fail = [&](const std::string& why) -> GrayImage { throw input_error("cannot decode '" + name + "': " + why); };
  auto next_int = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    long v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw input_error("cannot decode '" + name + "': truncated header");
    return v;
  };
  const char kind = static_cast<char>(bytes[1]);
  const int channels = (kind == '3' || kind == '6') ? 3 : 1;
  const long width = next_int();
  const long height = next_int();
  const long maxval = next_int();
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535) return fail("bad header values");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  std::vector<double> samples(n);
  if (kind == '2' || kind == '3') {
    for (auto& s : samples) s = static_cast<double>(next_int());
  } else {
    ++pos;  // single whitespace after maxval
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (bytes.size() < pos + n * bps) return fail("truncated pixel data");
    for (std::size_t i = 0; i < n; ++i)
      samples[i] = bps == 1 ? bytes[pos + i] : (bytes[pos + 2 * i] << 8 | bytes[pos + 2 * i + 1]);
  }
  std::vector<double> gray(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < gray.size(); ++i) {
    double v = channels == 1 ? samples[i]
                             : 0.299 * samples[3 * i] + 0.587 * samples[3 * i + 1] + 0.114 * samples[3 * i + 2];
    if (v > maxval) return fail("sample exceeds maxval");
    gray[i] = v / static_cast<double>(maxval);
  }
  return GrayImage(static_cast<int>(height), static_cast<int>(width), std::move(gray));
}

}  // namespace

GrayImage load_gray_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto name = path.string();
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes, name);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return decode_jpeg(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '2' && bytes[1] <= '6' && bytes[1] != '4')
    return decode_netpbm(bytes, name);
  throw input_error("unsupported image format: '" + name + "'");
}

}  // namespace segplex::tools
