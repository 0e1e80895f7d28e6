#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "sirrkit/tensor.hpp"

namespace sirrkit {

class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class ImageFormat { png, ppm, pfm };

inline const char* format_extension(ImageFormat f) {
    switch (f) {
        case ImageFormat::png: return ".png";
        case ImageFormat::ppm: return ".ppm";
        case ImageFormat::pfm: return ".pfm";
    }
    return ".png";
}

inline ImageFormat parse_format(const std::string& name) {
    if (name == "png") return ImageFormat::png;
    if (name == "ppm") return ImageFormat::ppm;
    if (name == "pfm") return ImageFormat::pfm;
    throw IoError("unknown image format: " + name);
}

namespace detail {

struct FileHandle {
    std::FILE* fp = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) {
        fp = std::fopen(path.c_str(), mode);
        if (!fp) throw IoError("cannot open " + path);
    }
    ~FileHandle() {
        if (fp) std::fclose(fp);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

inline Tensor3 read_png(const std::string& path) {
    FileHandle file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }
    std::vector<png_byte> storage;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode PNG " + path);
    }
    png_init_io(png, file.fp);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    storage.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = storage.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor3 out(static_cast<int>(h), static_cast<int>(w), 3);
    if (out_depth == 8) {
        for (png_uint_32 y = 0; y < h; ++y) {
            const png_bytep row = storage.data() + y * rowbytes;
            for (png_uint_32 x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    out.at(static_cast<int>(y), static_cast<int>(x), c) =
                        row[3 * x + c] / 255.0;
        }
    } else if (out_depth == 16) {
        for (png_uint_32 y = 0; y < h; ++y) {
            const png_bytep row = storage.data() + y * rowbytes;
            for (png_uint_32 x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    // PNG 16-bit samples are big-endian
                    const unsigned v = (static_cast<unsigned>(row[6 * x + 2 * c]) << 8) |
                                       row[6 * x + 2 * c + 1];
                    out.at(static_cast<int>(y), static_cast<int>(x), c) = v / 65535.0;
                }
        }
    } else {
        throw IoError("unsupported PNG bit depth in " + path);
    }
    return out;
}

inline void write_png8(const std::string& path, const Tensor3& image) {
    if (image.channels != 3) throw IoError("write_png8: image must have 3 channels");
    FileHandle file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }
    std::vector<png_byte> storage;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode PNG " + path);
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    storage.resize(static_cast<std::size_t>(image.width) * image.height * 3);
    rows.resize(image.height);
    for (int y = 0; y < image.height; ++y) {
        png_bytep row = storage.data() + static_cast<std::size_t>(y) * image.width * 3;
        rows[y] = row;
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = image.at(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[3 * x + c] = static_cast<png_byte>(v * 255.0 + 0.5);
            }
    }
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void skip_ppm_whitespace(std::FILE* fp) {
    int ch = std::fgetc(fp);
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = std::fgetc(fp);
        } else if (!std::isspace(ch)) {
            std::ungetc(ch, fp);
            return;
        }
        ch = std::fgetc(fp);
    }
}

inline long read_ppm_int(std::FILE* fp, const std::string& path) {
    skip_ppm_whitespace(fp);
    long v = 0;
    if (std::fscanf(fp, "%ld", &v) != 1) throw IoError("malformed PPM header in " + path);
    return v;
}

inline Tensor3 read_ppm(const std::string& path) {
    FileHandle file(path, "rb");
    char magic[3] = {0, 0, 0};
    if (std::fread(magic, 1, 2, file.fp) != 2 || magic[0] != 'P' || magic[1] != '6')
        throw IoError("not a binary PPM: " + path);
    const long w = read_ppm_int(file.fp, path);
    const long h = read_ppm_int(file.fp, path);
    const long maxval = read_ppm_int(file.fp, path);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        throw IoError("malformed PPM header in " + path);
    std::fgetc(file.fp);  // single whitespace after maxval
    Tensor3 out(static_cast<int>(h), static_cast<int>(w), 3);
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3 * bytes);
    for (long y = 0; y < h; ++y) {
        if (std::fread(row.data(), 1, row.size(), file.fp) != row.size())
            throw IoError("truncated PPM data in " + path);
        for (long x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                unsigned v;
                if (bytes == 1) {
                    v = row[3 * x + c];
                } else {
                    v = (static_cast<unsigned>(row[6 * x + 2 * c]) << 8) | row[6 * x + 2 * c + 1];
                }
                out.at(static_cast<int>(y), static_cast<int>(x), c) =
                    static_cast<double>(v) / static_cast<double>(maxval);
            }
    }
    return out;
}

inline void write_ppm8(const std::string& path, const Tensor3& image) {
    if (image.channels != 3) throw IoError("write_ppm8: image must have 3 channels");
    FileHandle file(path, "wb");
    std::fprintf(file.fp, "P6\n%d %d\n255\n", image.width, image.height);
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = image.at(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[3 * x + c] = static_cast<unsigned char>(v * 255.0 + 0.5);
            }
        if (std::fwrite(row.data(), 1, row.size(), file.fp) != row.size())
            throw IoError("write failed for " + path);
    }
}

inline bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

// PFM: "PF" color / "Pf" grayscale, float32 samples, rows bottom-to-top,
// negative scale marks little-endian data.
inline Tensor3 read_pfm(const std::string& path) {
    FileHandle file(path, "rb");
    char magic[3] = {0, 0, 0};
    if (std::fscanf(file.fp, "%2s", magic) != 1 || magic[0] != 'P' ||
        (magic[1] != 'F' && magic[1] != 'f'))
        throw IoError("not a PFM: " + path);
    const int channels = magic[1] == 'F' ? 3 : 1;
    int w = 0, h = 0;
    double scale = 0.0;
    if (std::fscanf(file.fp, "%d %d %lf", &w, &h, &scale) != 3 || w < 1 || h < 1 || scale == 0.0)
        throw IoError("malformed PFM header in " + path);
    std::fgetc(file.fp);  // single whitespace before data
    const bool file_little = scale < 0.0;
    Tensor3 out(h, w, channels);
    std::vector<float> row(static_cast<std::size_t>(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        if (std::fread(row.data(), sizeof(float), row.size(), file.fp) != row.size())
            throw IoError("truncated PFM data in " + path);
        if (file_little != host_is_little_endian()) {
            for (float& f : row) {
                std::uint32_t u;
                std::memcpy(&u, &f, 4);
                u = ((u & 0xff) << 24) | ((u & 0xff00) << 8) | ((u >> 8) & 0xff00) | (u >> 24);
                std::memcpy(&f, &u, 4);
            }
        }
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) out.at(y, x, c) = row[x * channels + c];
    }
    return out;
}

inline void write_pfm(const std::string& path, const Tensor3& image) {
    if (image.channels != 3 && image.channels != 1)
        throw IoError("write_pfm: image must have 1 or 3 channels");
    FileHandle file(path, "wb");
    std::fprintf(file.fp, "%s\n%d %d\n%.1f\n", image.channels == 3 ? "PF" : "Pf", image.width,
                 image.height, host_is_little_endian() ? -1.0 : 1.0);
    std::vector<float> row(static_cast<std::size_t>(image.width) * image.channels);
    for (int y = image.height - 1; y >= 0; --y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c)
                row[x * image.channels + c] = static_cast<float>(image.at(y, x, c));
        if (std::fwrite(row.data(), sizeof(float), row.size(), file.fp) != row.size())
            throw IoError("write failed for " + path);
    }
}

}  // namespace detail

/// Reads a PNG, binary PPM or PFM image by sniffing the magic bytes.
/// PNG/PPM values are scaled to [0, 1]; PFM floats are returned as stored.
inline Tensor3 read_image(const std::string& path) {
    unsigned char magic[2] = {0, 0};
    {
        detail::FileHandle file(path, "rb");
        if (std::fread(magic, 1, 2, file.fp) != 2) throw IoError("cannot read " + path);
    }
    if (magic[0] == 0x89 && magic[1] == 'P') return detail::read_png(path);
    if (magic[0] == 'P' && magic[1] == '6') return detail::read_ppm(path);
    if (magic[0] == 'P' && (magic[1] == 'F' || magic[1] == 'f')) return detail::read_pfm(path);
    throw IoError("unrecognized image format: " + path);
}

/// Writes a display image (clamped, 8-bit quantized for png/ppm) or raw
/// floats for pfm.
inline void write_image(const std::string& path, const Tensor3& image, ImageFormat format) {
    switch (format) {
        case ImageFormat::png: detail::write_png8(path, image); return;
        case ImageFormat::ppm: detail::write_ppm8(path, image); return;
        case ImageFormat::pfm: detail::write_pfm(path, image); return;
    }
}

}  // namespace sirrkit
