#include "eqdenoise/image_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#ifdef EQD_HAVE_PNG
#include <png.h>
#endif

namespace eqd {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const std::string& path) {
    std::string e = fs::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

int next_pnm_int(std::istream& is) {
    // skips whitespace and '#' comments
    while (is) {
        int c = is.peek();
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int v = -1;
    is >> v;
    return v;
}

Tensor load_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open image: " + path);
    char p, kind;
    is.get(p);
    is.get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
        throw std::runtime_error("unsupported PNM type in " + path);
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    const int w = next_pnm_int(is);
    const int h = next_pnm_int(is);
    const int maxval = next_pnm_int(is);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error("bad PNM header in " + path);
    const int c = color ? 3 : 1;
    Tensor img(Shape{c, h, w});
    if (binary) {
        is.get();  // single whitespace after maxval
        std::vector<unsigned char> buf(static_cast<size_t>(w) * h * c);
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("truncated PNM data in " + path);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < c; ++ch)
                    img.at3(ch, y, x) = buf[(static_cast<size_t>(y) * w + x) * c + ch];
    } else {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ch = 0; ch < c; ++ch) {
                    const int v = next_pnm_int(is);
                    if (v < 0) throw std::runtime_error("truncated PNM data in " + path);
                    img.at3(ch, y, x) = v;
                }
    }
    if (maxval != 255)
        for (double& v : img.data) v = v * 255.0 / maxval;
    return img;
}

void save_pnm(const std::string& path, const Tensor& img, bool color) {
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open image for writing: " + path);
    os << (color ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const double v = std::clamp(img.at3(ch, y, x), 0.0, 255.0);
                buf[(static_cast<size_t>(y) * w + x) * c + ch] =
                    static_cast<unsigned char>(std::lround(v));
            }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

#ifdef EQD_HAVE_PNG

Tensor load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("failed to decode PNG: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = static_cast<int>(png_get_channels(png, info));
    std::vector<unsigned char> row(static_cast<size_t>(w) * c);
    Tensor img(Shape{c, h, w});
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) img.at3(ch, y, x) = row[static_cast<size_t>(x) * c + ch];
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void save_png(const std::string& path, const Tensor& img) {
    const int c = img.shape[0], h = img.shape[1], w = img.shape[2];
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open image for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("failed to encode PNG: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const double v = std::clamp(img.at3(ch, y, x), 0.0, 255.0);
                row[static_cast<size_t>(x) * c + ch] = static_cast<unsigned char>(std::lround(v));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

#endif  // EQD_HAVE_PNG

}  // namespace

Tensor load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".pgm" || ext == ".ppm") return load_pnm(path);
    if (ext == ".png") {
#ifdef EQD_HAVE_PNG
        return load_png(path);
#else
        throw std::runtime_error("PNG support not built in; use PGM/PPM: " + path);
#endif
    }
    throw std::runtime_error("unsupported image format: " + path);
}

void save_image(const std::string& path, const Tensor& img) {
    if (img.rank() != 3 || (img.shape[0] != 1 && img.shape[0] != 3))
        throw std::invalid_argument("save_image: expected [1|3,H,W], got " + shape_str(img.shape));
    const std::string ext = lower_ext(path);
    if (ext == ".pgm" && img.shape[0] == 1) return save_pnm(path, img, false);
    if (ext == ".ppm" && img.shape[0] == 3) return save_pnm(path, img, true);
    if (ext == ".png") {
#ifdef EQD_HAVE_PNG
        return save_png(path, img);
#else
        throw std::runtime_error("PNG support not built in: " + path);
#endif
    }
    throw std::runtime_error("unsupported output format/channels for " + path);
}

Tensor to_gray(const Tensor& img) {
    if (img.shape[0] == 1) return img;
    if (img.shape[0] != 3)
        throw std::invalid_argument("to_gray: expected 1 or 3 channels, got " +
                                    shape_str(img.shape));
    const int h = img.shape[1], w = img.shape[2];
    Tensor out(Shape{1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at3(0, y, x) = 0.299 * img.at3(0, y, x) + 0.587 * img.at3(1, y, x) +
                               0.114 * img.at3(2, y, x);
    return out;
}

std::vector<std::string> list_images(const std::string& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower_ext(e.path().string());
        if (ext == ".pgm" || ext == ".ppm" || ext == ".png") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace eqd
