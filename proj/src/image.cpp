#include "binkit/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace binkit {

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("read error: " + path);
    return bytes;
}

// --- PGM (binary P5) ---

bool pnm_space(uint8_t c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

int pnm_token(const std::vector<uint8_t>& b, size_t& pos, const std::string& path) {
    while (pos < b.size()) {
        if (pnm_space(b[pos])) {
            ++pos;
        } else if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size() || b[pos] < '0' || b[pos] > '9')
        throw std::runtime_error("malformed PGM header: " + path);
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        v = v * 10 + (b[pos] - '0');
        if (v > 1 << 30) throw std::runtime_error("malformed PGM header: " + path);
        ++pos;
    }
    return static_cast<int>(v);
}

GrayImage load_pgm(const std::vector<uint8_t>& bytes, const std::string& path) {
    size_t pos = 2;  // past "P5"
    const int w = pnm_token(bytes, pos, path);
    const int h = pnm_token(bytes, pos, path);
    const int maxval = pnm_token(bytes, pos, path);
    if (w <= 0 || h <= 0) throw std::runtime_error("zero-dimension image: " + path);
    if (maxval < 1 || maxval > 255) throw std::runtime_error("unsupported PGM maxval: " + path);
    if (pos >= bytes.size() || !pnm_space(bytes[pos]))
        throw std::runtime_error("malformed PGM header: " + path);
    ++pos;  // single whitespace separates header from payload
    const size_t need = static_cast<size_t>(w) * h;
    if (bytes.size() - pos < need) throw std::runtime_error("truncated PGM payload: " + path);

    GrayImage img(w, h);
    const float scale = 1.0f / static_cast<float>(maxval);
    for (size_t i = 0; i < need; ++i) img.pixels[i] = static_cast<float>(bytes[pos + i]) * scale;
    return img;
}

// --- PNG (8-bit grayscale or RGB, non-interlaced) ---

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

GrayImage load_png(const std::vector<uint8_t>& bytes, const std::string& path) {
    size_t pos = 8;  // past signature
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    bool have_header = false;
    std::vector<uint8_t> idat;

    while (pos + 8 <= bytes.size()) {
        const uint32_t len = be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw std::runtime_error("truncated PNG: " + path);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const uint8_t* data = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw std::runtime_error("malformed PNG IHDR: " + path);
            w = static_cast<int>(be32(data));
            h = static_cast<int>(be32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[10] != 0 || data[11] != 0) throw std::runtime_error("unsupported PNG compression: " + path);
            if (data[12] != 0) throw std::runtime_error("unsupported interlaced PNG: " + path);
            have_header = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }

    if (!have_header || w <= 0 || h <= 0) throw std::runtime_error("malformed PNG: " + path);
    if (bit_depth != 8 || (color_type != 0 && color_type != 2))
        throw std::runtime_error("unsupported PNG format (need 8-bit gray or RGB): " + path);

    const int channels = color_type == 2 ? 3 : 1;
    const size_t row_bytes = static_cast<size_t>(w) * channels;
    std::vector<uint8_t> raw(static_cast<size_t>(h) * (row_bytes + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw std::runtime_error("corrupt PNG image data: " + path);

    // Undo per-scanline filtering in place.
    std::vector<uint8_t> prev(row_bytes, 0);
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y) {
        uint8_t* line = &raw[static_cast<size_t>(y) * (row_bytes + 1)];
        const uint8_t filter = line[0];
        uint8_t* cur = line + 1;
        for (size_t x = 0; x < row_bytes; ++x) {
            const int left = x >= static_cast<size_t>(channels) ? cur[x - channels] : 0;
            const int up = prev[x];
            const int ul = x >= static_cast<size_t>(channels) ? prev[x - channels] : 0;
            switch (filter) {
                case 0: break;
                case 1: cur[x] = static_cast<uint8_t>(cur[x] + left); break;
                case 2: cur[x] = static_cast<uint8_t>(cur[x] + up); break;
                case 3: cur[x] = static_cast<uint8_t>(cur[x] + (left + up) / 2); break;
                case 4: cur[x] = static_cast<uint8_t>(cur[x] + paeth(left, up, ul)); break;
                default: throw std::runtime_error("corrupt PNG filter byte: " + path);
            }
        }
        std::memcpy(prev.data(), cur, row_bytes);
        for (int x = 0; x < w; ++x) {
            if (channels == 1) {
                img.at(y, x) = static_cast<float>(cur[x]) / 255.0f;
            } else {
                const double luma =
                    0.299 * cur[3 * x] + 0.587 * cur[3 * x + 1] + 0.114 * cur[3 * x + 2];
                img.at(y, x) = static_cast<float>(luma / 255.0);
            }
        }
    }
    return img;
}

constexpr uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

GrayImage load_gray(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return load_pgm(bytes, path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0)
        return load_png(bytes, path);
    throw std::runtime_error("unsupported raster format: " + path);
}

void save_gray(const GrayImage& img, const std::string& path) {
    if (img.empty()) throw std::invalid_argument("save_gray: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const float p = std::min(1.0f, std::max(0.0f, img.at(r, c)));
            row[c] = static_cast<uint8_t>(std::lround(p * 255.0f));
        }
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw std::runtime_error("write error: " + path);
}

void save_mask(const BinaryMask& mask, const std::string& path) {
    if (mask.width <= 0 || mask.height <= 0) throw std::invalid_argument("save_mask: empty mask");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<uint8_t> row(mask.width);
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) row[c] = mask.at(r, c) ? 0 : 255;
        out.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!out) throw std::runtime_error("write error: " + path);
}

BinaryMask load_mask(const std::string& path) {
    const GrayImage img = load_gray(path);
    BinaryMask mask(img.width, img.height);
    for (size_t i = 0; i < img.pixel_count(); ++i) mask.labels[i] = img.pixels[i] < 0.5f ? 1 : 0;
    return mask;
}

namespace {

PatchGrid make_grid(int width, int height, int side) {
    if (side < 1) throw std::invalid_argument("window side must be >= 1");
    if (width <= 0 || height <= 0) throw std::invalid_argument("cannot tile an empty image");
    PatchGrid grid;
    grid.window_side = side;
    grid.padded_width = ((width + side - 1) / side) * side;
    grid.padded_height = ((height + side - 1) / side) * side;
    for (int r = 0; r < grid.padded_height; r += side)
        for (int c = 0; c < grid.padded_width; c += side) grid.origins.emplace_back(r, c);
    return grid;
}

}  // namespace

std::pair<PatchGrid, std::vector<GrayImage>> split_into_windows(const GrayImage& img, int side) {
    PatchGrid grid = make_grid(img.width, img.height, side);
    std::vector<GrayImage> windows;
    windows.reserve(grid.origins.size());
    for (const auto& [r0, c0] : grid.origins) {
        GrayImage win(side, side);
        for (int r = 0; r < side; ++r) {
            const int src_r = reflect_index(r0 + r, img.height);
            for (int c = 0; c < side; ++c)
                win.at(r, c) = img.at(src_r, reflect_index(c0 + c, img.width));
        }
        windows.push_back(std::move(win));
    }
    return {std::move(grid), std::move(windows)};
}

std::pair<PatchGrid, std::vector<BinaryMask>> split_mask_into_windows(const BinaryMask& mask, int side) {
    PatchGrid grid = make_grid(mask.width, mask.height, side);
    std::vector<BinaryMask> windows;
    windows.reserve(grid.origins.size());
    for (const auto& [r0, c0] : grid.origins) {
        BinaryMask win(side, side);
        for (int r = 0; r < side; ++r) {
            const int src_r = reflect_index(r0 + r, mask.height);
            for (int c = 0; c < side; ++c)
                win.set(r, c, mask.at(src_r, reflect_index(c0 + c, mask.width)));
        }
        windows.push_back(std::move(win));
    }
    return {std::move(grid), std::move(windows)};
}

GrayImage stitch_windows(const PatchGrid& grid, const std::vector<GrayImage>& windows,
                         int out_width, int out_height) {
    if (windows.size() != grid.origins.size())
        throw std::invalid_argument("stitch: window count does not match grid");
    if (out_width <= 0 || out_height <= 0 || out_width > grid.padded_width ||
        out_height > grid.padded_height)
        throw std::invalid_argument("stitch: output dims do not fit the grid");
    GrayImage out(out_width, out_height);
    const int side = grid.window_side;
    for (size_t i = 0; i < windows.size(); ++i) {
        const GrayImage& win = windows[i];
        if (win.width != side || win.height != side)
            throw std::invalid_argument("stitch: window shape does not match grid");
        const auto& [r0, c0] = grid.origins[i];
        for (int r = 0; r < side && r0 + r < out_height; ++r)
            for (int c = 0; c < side && c0 + c < out_width; ++c)
                out.at(r0 + r, c0 + c) = win.at(r, c);
    }
    return out;
}

BinaryMask stitch_mask_windows(const PatchGrid& grid, const std::vector<BinaryMask>& windows,
                               int out_width, int out_height) {
    if (windows.size() != grid.origins.size())
        throw std::invalid_argument("stitch: window count does not match grid");
    if (out_width <= 0 || out_height <= 0 || out_width > grid.padded_width ||
        out_height > grid.padded_height)
        throw std::invalid_argument("stitch: output dims do not fit the grid");
    BinaryMask out(out_width, out_height);
    const int side = grid.window_side;
    for (size_t i = 0; i < windows.size(); ++i) {
        const BinaryMask& win = windows[i];
        if (win.width != side || win.height != side)
            throw std::invalid_argument("stitch: window shape does not match grid");
        const auto& [r0, c0] = grid.origins[i];
        for (int r = 0; r < side && r0 + r < out_height; ++r)
            for (int c = 0; c < side && c0 + c < out_width; ++c)
                out.set(r0 + r, c0 + c, win.at(r, c));
    }
    return out;
}

}  // namespace binkit
