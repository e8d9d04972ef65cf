#include "pathonet/raster.hpp"

#include <cmath>
#include <cstdio>

#include "pathonet/serial.hpp"

namespace pathonet {

namespace {

// PNM header token reader: skips whitespace and '#' comments.
struct PnmHeader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    const std::string& what;

    int next_int() {
        // skip whitespace and comments
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
            throw FormatError(what + ": malformed PNM header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1 << 30) throw FormatError(what + ": absurd header value");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

} // namespace

Tensor<float> decode_raster(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    if (bytes.size() < 2) throw FormatError(what + ": too short to be a PNM file");
    const char m0 = static_cast<char>(bytes[0]);
    const char m1 = static_cast<char>(bytes[1]);
    int channels;
    if (m0 == 'P' && m1 == '5') channels = 1;
    else if (m0 == 'P' && m1 == '6') channels = 3;
    else throw FormatError(what + ": bad magic, expected P5 or P6");

    PnmHeader hdr{bytes, 2, what};
    const int w = hdr.next_int();
    const int h = hdr.next_int();
    const int maxval = hdr.next_int();
    if (w <= 0 || h <= 0) throw FormatError(what + ": non-positive dimensions");
    if (maxval != 255)
        throw FormatError(what + ": unsupported depth (maxval " + std::to_string(maxval) +
                          ", only 255 supported)");
    // exactly one whitespace byte separates header and payload
    if (hdr.pos >= bytes.size() || !std::isspace(bytes[hdr.pos]))
        throw FormatError(what + ": malformed PNM header");
    std::size_t payload = hdr.pos + 1;

    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - payload < need)
        throw FormatError(what + ": truncated payload (need " + std::to_string(need) +
                          " bytes, have " + std::to_string(bytes.size() - payload) + ")");

    Tensor<float> img({channels, h, w});
    // interleaved bytes -> planar floats
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::uint8_t b =
                    bytes[payload + (static_cast<std::size_t>(y) * w + x) * channels + c];
                img[(static_cast<std::int64_t>(c) * h + y) * w + x] =
                    static_cast<float>(b) / 255.0f;
            }
    return img;
}

Tensor<float> load_raster(const std::string& path) {
    return decode_raster(read_file(path), path);
}

std::vector<std::uint8_t> encode_raster(const Tensor<float>& image) {
    if (image.rank() != 3 || (image.extent(0) != 1 && image.extent(0) != 3))
        throw ShapeError("save_raster: expected (1,H,W) or (3,H,W), got " + image.shape_str());
    const int c = image.extent(0), h = image.extent(1), w = image.extent(2);

    char header[64];
    const int n = std::snprintf(header, sizeof(header), "%s\n%d %d\n255\n",
                                c == 1 ? "P5" : "P6", w, h);
    std::vector<std::uint8_t> out(header, header + n);
    out.reserve(out.size() + static_cast<std::size_t>(c) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ic = 0; ic < c; ++ic) {
                float v = image[(static_cast<std::int64_t>(ic) * h + y) * w + x];
                v = std::min(1.0f, std::max(0.0f, v));
                out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
            }
    return out;
}

void save_raster(const Tensor<float>& image, const std::string& path) {
    write_file(path, encode_raster(image));
}

Tensor<float> to_rgb(const Tensor<float>& image) {
    if (image.rank() != 3) throw ShapeError("to_rgb: expected (C,H,W), got " + image.shape_str());
    if (image.extent(0) == 3) return image;
    if (image.extent(0) != 1)
        throw ShapeError("to_rgb: expected 1 or 3 channels, got " +
                         std::to_string(image.extent(0)));
    const int h = image.extent(1), w = image.extent(2);
    Tensor<float> rgb({3, h, w});
    for (int c = 0; c < 3; ++c)
        std::copy_n(image.data(), static_cast<std::int64_t>(h) * w,
                    rgb.data() + static_cast<std::int64_t>(c) * h * w);
    return rgb;
}

} // namespace pathonet
