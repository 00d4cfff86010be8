#include "msplat/io_image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace msplat {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error(path + ": " + msg);
}

bool host_is_little_endian() {
    const std::uint32_t probe = 1;
    return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

} // namespace

void write_pfm(const std::string& path, const GridF& image) {
    const int C = image.channels();
    if (C != 1 && C != 3)
        throw std::invalid_argument("write_pfm: only 1 or 3 channels supported");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(path, "cannot open for writing");
    out << (C == 3 ? "PF" : "Pf") << "\n"
        << image.width() << " " << image.height() << "\n"
        << "-1.0\n";
    std::vector<float> row(size_t(image.width()) * C);
    for (int y = image.height() - 1; y >= 0; --y) { // bottom-up on disk
        for (int x = 0; x < image.width(); ++x)
            for (int ch = 0; ch < C; ++ch)
                row[size_t(x) * C + ch] = float(image.at(x, y, ch));
        out.write(reinterpret_cast<const char*>(row.data()),
                  std::streamsize(row.size() * sizeof(float)));
    }
    if (!out)
        fail(path, "write failed");
}

GridF read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(path, "cannot open");
    std::string magic;
    in >> magic;
    int channels;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        fail(path, "bad PFM magic at byte offset 0 (expected 'PF' or 'Pf')");
    int w = 0, h = 0;
    double scale = 0;
    in >> w >> h >> scale;
    if (!in || w <= 0 || h <= 0 || scale == 0)
        fail(path, "malformed PFM header");
    in.get(); // single whitespace after the scale line
    const bool file_little = scale < 0;

    GridF image(w, h, channels);
    std::vector<float> row(size_t(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
        if (!in)
            fail(path, "truncated PFM payload at byte offset " +
                           std::to_string(size_t(in.tellg())));
        if (file_little != host_is_little_endian())
            for (auto& v : row) {
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                bits = __builtin_bswap32(bits);
                std::memcpy(&v, &bits, 4);
            }
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < channels; ++ch)
                image.at(x, y, ch) = row[size_t(x) * channels + ch];
    }
    return image;
}

void write_png(const std::string& path, const GridU8& image) {
    const int C = image.channels();
    if (C != 1 && C != 3)
        throw std::invalid_argument("write_png: only 1 or 3 channels supported");
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp)
        fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "libpng write error");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, image.width(), image.height(), 8,
                 C == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height(); ++y)
        png_write_row(png, const_cast<png_bytep>(image.row(y)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

GridU8 read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp)
        fail(path, "cannot open");

    unsigned char header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        fail(path, "bad PNG signature at byte offset 0");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "libpng read error");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "16-bit PNG not supported");
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    const int channels = int(png_get_channels(png, info));
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported channel count " + std::to_string(channels));
    }

    GridU8 image(w, h, channels);
    for (int y = 0; y < h; ++y)
        png_read_row(png, image.row(y), nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

GridU8 to_u8(const GridF& image) {
    GridU8 out(image.width(), image.height(), image.channels());
    for (size_t i = 0; i < image.size(); ++i) {
        const Scalar v = std::clamp(image.storage()[i], Scalar(0), Scalar(1));
        out.storage()[i] = std::uint8_t(std::lround(v * 255.0));
    }
    return out;
}

GridF to_unit(const GridU8& image) {
    GridF out(image.width(), image.height(), image.channels());
    for (size_t i = 0; i < image.size(); ++i)
        out.storage()[i] = Scalar(image.storage()[i]) / 255.0;
    return out;
}

} // namespace msplat
