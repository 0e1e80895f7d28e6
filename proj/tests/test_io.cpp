#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sirrkit/image_io.hpp"

using namespace sirrkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "sirrkit_io_test";
    fs::create_directories(dir);
    return dir;
}

Tensor3 random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor3 t(h, w, 3);
    for (double& v : t.data) v = rng.uniform();
    return t;
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("png round trip is 8-bit exact") {
    const fs::path dir = temp_dir();
    const Tensor3 img = random_image(13, 9, 77);
    const fs::path p = dir / "rt.png";
    write_image(p.string(), img, ImageFormat::png);
    const Tensor3 back = read_image(p.string());
    REQUIRE(back.height == 13);
    REQUIRE(back.width == 9);
    REQUIRE(back.channels == 3);
    REQUIRE(max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-12);

    // writing the same tensor twice yields identical bytes
    const fs::path p2 = dir / "rt2.png";
    write_image(p2.string(), img, ImageFormat::png);
    REQUIRE(read_bytes(p) == read_bytes(p2));
}

TEST_CASE("quantized values survive a png round trip exactly") {
    Tensor3 img(4, 4, 3);
    for (std::size_t k = 0; k < img.size(); ++k)
        img.data[k] = static_cast<double>((k * 37) % 256) / 255.0;
    const fs::path p = temp_dir() / "exact.png";
    write_image(p.string(), img, ImageFormat::png);
    const Tensor3 back = read_image(p.string());
    REQUIRE(max_abs_diff(back, img) <= 1e-12);
}

TEST_CASE("ppm round trip is 8-bit exact") {
    const Tensor3 img = random_image(7, 11, 78);
    const fs::path p = temp_dir() / "rt.ppm";
    write_image(p.string(), img, ImageFormat::ppm);
    const Tensor3 back = read_image(p.string());
    REQUIRE(max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("pfm round trip preserves float32 data including negatives") {
    Rng rng(79);
    Tensor3 img(6, 5, 3);
    for (double& v : img.data) v = rng.normal();  // unbounded, signed
    const fs::path p = temp_dir() / "rt.pfm";
    write_image(p.string(), img, ImageFormat::pfm);
    const Tensor3 back = read_image(p.string());
    for (std::size_t k = 0; k < img.size(); ++k)
        REQUIRE(back.data[k] == static_cast<double>(static_cast<float>(img.data[k])));
}

TEST_CASE("single channel pfm round trip") {
    Rng rng(81);
    Tensor3 img(4, 4, 1);
    for (double& v : img.data) v = rng.normal();
    const fs::path p = temp_dir() / "gray.pfm";
    detail::write_pfm(p.string(), img);
    const Tensor3 back = read_image(p.string());
    REQUIRE(back.channels == 1);
    for (std::size_t k = 0; k < img.size(); ++k)
        REQUIRE(back.data[k] == static_cast<double>(static_cast<float>(img.data[k])));
}

TEST_CASE("read_image dispatches on magic bytes and rejects junk") {
    const fs::path dir = temp_dir();
    const fs::path junk = dir / "junk.bin";
    {
        std::ofstream out(junk, std::ios::binary);
        out << "XYZW not an image";
    }
    REQUIRE_THROWS_AS(read_image(junk.string()), IoError);
    REQUIRE_THROWS_AS(read_image((dir / "missing.png").string()), IoError);
}

TEST_CASE("16 bit png input is accepted") {
    // hand-rolled 16-bit grayscale PNG via libpng to exercise the read path
    const fs::path p = temp_dir() / "deep.png";
    {
        FILE* fp = fopen(p.string().c_str(), "wb");
        REQUIRE(fp != nullptr);
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                                  nullptr);
        png_infop info = png_create_info_struct(png);
        REQUIRE(setjmp(png_jmpbuf(png)) == 0);
        png_init_io(png, fp);
        png_set_IHDR(png, info, 3, 2, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        // rows: big-endian 16-bit samples 0, 32768, 65535 / 100, 200, 300
        unsigned char row0[6] = {0x00, 0x00, 0x80, 0x00, 0xff, 0xff};
        unsigned char row1[6] = {0x00, 0x64, 0x00, 0xc8, 0x01, 0x2c};
        png_bytep rows[2] = {row0, row1};
        png_write_image(png, rows);
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
        fclose(fp);
    }
    const Tensor3 img = read_image(p.string());
    REQUIRE(img.height == 2);
    REQUIRE(img.width == 3);
    REQUIRE(img.channels == 3);  // gray expanded to rgb
    REQUIRE(img.at(0, 0, 0) == 0.0);
    REQUIRE(img.at(0, 1, 1) == Catch::Approx(32768.0 / 65535.0).margin(1e-12));
    REQUIRE(img.at(0, 2, 2) == 1.0);
    REQUIRE(img.at(1, 0, 0) == Catch::Approx(100.0 / 65535.0).margin(1e-12));
}
