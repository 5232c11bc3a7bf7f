#include "skyloop/frame_sequence.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include "json.hpp"

namespace skyloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct MemoryReader {
  const std::vector<unsigned char>* bytes;
  std::size_t offset = 0;
};

[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::IoFailure, std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

void png_write_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

void png_read_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* in = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (in->offset + length > in->bytes->size()) png_error(png, "truncated stream");
  std::memcpy(data, in->bytes->data() + in->offset, length);
  in->offset += length;
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorCode::IoFailure, "failed writing " + path);
}

}  // namespace

std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.png", index);
  return buf;
}

std::vector<unsigned char> encode_png(const GrayImage& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (png == nullptr) throw Error(ErrorCode::IoFailure, "png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::vector<unsigned char> out;
  try {
    png_set_write_fn(png, &out, png_write_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
                 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < img.height(); ++y) {
      png_write_row(png, const_cast<png_bytep>(img.row(y)));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

GrayImage decode_png(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::ParseError, "not a PNG stream");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (png == nullptr) throw Error(ErrorCode::IoFailure, "png: cannot create reader");
  png_infop info = png_create_info_struct(png);
  MemoryReader reader{&bytes};
  GrayImage img;
  try {
    png_set_read_fn(png, &reader, png_read_vector);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
      png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 1) throw Error(ErrorCode::ParseError, "png: expected grayscale");
    img = GrayImage(w, h);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[y] = img.pixels().data() + static_cast<std::size_t>(y) * w;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

GrayImage read_png(const std::string& path) { return decode_png(read_file(path)); }

void write_png(const std::string& path, const GrayImage& img) { write_file(path, encode_png(img)); }

FrameSequence read_frame_sequence(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error(ErrorCode::ParseError, dir + " is not a directory");
  const fs::path meta_path = root / kMetaFile;
  if (!fs::exists(meta_path)) throw Error(ErrorCode::ParseError, "missing " + meta_path.string());
  FrameSequence seq;
  try {
    std::ifstream is(meta_path);
    const json meta = json::parse(is);
    seq.fps = meta.at("fps").get<double>();
    seq.intrinsics.width = meta.at("width").get<int>();
    seq.intrinsics.height = meta.at("height").get<int>();
    seq.intrinsics.fx = meta.at("fx").get<double>();
    seq.intrinsics.fy = meta.at("fy").get<double>();
    seq.intrinsics.cx = meta.at("cx").get<double>();
    seq.intrinsics.cy = meta.at("cy").get<double>();
    if (meta.contains("scale_hint")) {
      const json& h = meta["scale_hint"];
      seq.scale_hint = ScaleHint{h.at("t0").get<double>(), h.at("t1").get<double>(),
                                 h.at("distance").get<double>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "meta.json: " + std::string(e.what()));
  }
  if (!(seq.fps > 0.0)) throw Error(ErrorCode::ParseError, "meta.json: fps must be positive");
  try {
    seq.intrinsics.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, std::string("meta.json: ") + e.what());
  }
  for (std::size_t i = 0;; ++i) {
    const fs::path p = root / frame_filename(i);
    if (!fs::exists(p)) break;
    GrayImage img = read_png(p.string());
    if (img.width() != seq.intrinsics.width || img.height() != seq.intrinsics.height) {
      throw Error(ErrorCode::ParseError, p.string() + ": size disagrees with meta.json");
    }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

void write_frame_sequence(const std::string& dir, const FrameSequence& seq) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir + ": " + ec.message());
  json meta = {{"fps", seq.fps},
               {"width", seq.intrinsics.width},
               {"height", seq.intrinsics.height},
               {"fx", seq.intrinsics.fx},
               {"fy", seq.intrinsics.fy},
               {"cx", seq.intrinsics.cx},
               {"cy", seq.intrinsics.cy}};
  if (seq.scale_hint) {
    meta["scale_hint"] = {{"t0", seq.scale_hint->t0},
                          {"t1", seq.scale_hint->t1},
                          {"distance", seq.scale_hint->distance}};
  }
  {
    std::ofstream os(root / kMetaFile, std::ios::binary);
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write meta.json in " + dir);
    os << meta.dump(2) << '\n';
  }
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    write_png((root / frame_filename(i)).string(), seq.frames[i]);
  }
}

}  // namespace skyloop
