#include "nnfdet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <png.h>

#include "nnfdet/error.hpp"

namespace nnfdet {

RgbImage::RgbImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::IoError, "read failed: " + path.string());
    return bytes;
}

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = static_cast<char>(bytes_[pos_]);
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                return;
            }
        }
    }

    long number() {
        skip_space_and_comments();
        long value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > (1L << 24)) fail(ErrorCode::FormatError, "PPM header value too large");
            ++pos_;
            ++digits;
        }
        if (digits == 0) fail(ErrorCode::FormatError, "truncated or malformed PPM header");
        return value;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

RgbImage decode_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        fail(ErrorCode::FormatError, "unreadable PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::FormatError, "PNG decode failed: " + msg);
    }
    return out;
}

} // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        fail(ErrorCode::FormatError, "not a binary PPM (P6)");
    HeaderReader reader(bytes);
    reader.advance(2);
    const long w = reader.number();
    const long h = reader.number();
    const long maxval = reader.number();
    if (w < 1 || h < 1) fail(ErrorCode::FormatError, "PPM dimensions must be positive");
    if (maxval != 255) fail(ErrorCode::FormatError, "only 8-bit PPM (maxval 255) is supported");
    // exactly one whitespace byte separates the header from the raster
    if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()]))
        fail(ErrorCode::FormatError, "truncated PPM header");
    reader.advance(1);
    const std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() - reader.pos() < need) fail(ErrorCode::FormatError, "truncated PPM raster");
    RgbImage img(static_cast<int>(w), static_cast<int>(h));
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos()), need, img.pixels.begin());
    return img;
}

RgbImage decode_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, "no such file: " + path.string());
    const auto bytes = read_bytes(path);
    static constexpr std::uint8_t kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin()))
        return decode_png(path);
    return decode_ppm(bytes);
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    const auto bytes = encode_ppm(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const std::filesystem::path& path, const Plane& plane, float lo, float hi) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << "P5\n" << plane.width << " " << plane.height << "\n255\n";
    const float span = hi > lo ? hi - lo : 1.f;
    std::vector<std::uint8_t> row(plane.data.size());
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
        const float t = std::clamp((plane.data[i] - lo) / span, 0.f, 1.f);
        row[i] = static_cast<std::uint8_t>(std::lround(t * 255.f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
}

RgbImage flip_horizontal(const RgbImage& img) {
    RgbImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            std::copy_n(img.at(x, y), 3, out.at(img.width - 1 - x, y));
    return out;
}

RgbImage resample_bilinear(const RgbImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) fail(ErrorCode::InvalidArgument, "resample target must be positive");
    if (out_w == img.width && out_h == img.height) return img;
    RgbImage out(out_w, out_h);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;

    std::vector<int> x0(out_w), x1(out_w);
    std::vector<float> fx(out_w);
    for (int x = 0; x < out_w; ++x) {
        const double src = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
        x0[x] = static_cast<int>(src);
        x1[x] = std::min(x0[x] + 1, img.width - 1);
        fx[x] = static_cast<float>(src - x0[x]);
    }
    for (int y = 0; y < out_h; ++y) {
        const double src = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(src);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float fy = static_cast<float>(src - y0);
        for (int x = 0; x < out_w; ++x) {
            const std::uint8_t* p00 = img.at(x0[x], y0);
            const std::uint8_t* p10 = img.at(x1[x], y0);
            const std::uint8_t* p01 = img.at(x0[x], y1);
            const std::uint8_t* p11 = img.at(x1[x], y1);
            std::uint8_t* dst = out.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const float top = p00[c] + fx[x] * (p10[c] - p00[c]);
                const float bot = p01[c] + fx[x] * (p11[c] - p01[c]);
                dst[c] = static_cast<std::uint8_t>(std::lround(std::clamp(top + fy * (bot - top), 0.f, 255.f)));
            }
        }
    }
    return out;
}

} // namespace nnfdet
