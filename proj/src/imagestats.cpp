#include "descan/imagestats.hpp"

#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace descan {

GrayImage::GrayImage(LevelMatrix pixels, int levels) : pixels_(std::move(pixels)), levels_(levels) {
    if (levels < 2 || levels > 65536) throw std::invalid_argument("gray levels must be in [2, 65536]");
    if (pixels_.size() > 0 && static_cast<int>(pixels_.maxCoeff()) >= levels)
        throw std::invalid_argument("pixel level outside [0, levels)");
}

RgbImage load_png(const std::string& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) throw DataError(std::string("cannot decode PNG: ") + img.message, path);
    img.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw DataError("cannot decode PNG: " + msg, path);
    }
    RgbImage out;
    out.width = static_cast<int>(img.width);
    out.height = static_cast<int>(img.height);
    out.samples.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) out.samples[i] = static_cast<float>(buf[i]) / 255.0f;
    return out;
}

namespace {

// Next header token, skipping whitespace and # comments.
std::string ppm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw DataError("truncated PPM header", path);
    return tok;
}

int ppm_int(std::istream& in, const std::string& path) {
    const std::string tok = ppm_token(in, path);
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size() || v < 0) throw DataError("bad PPM number '" + tok + "'", path);
    return v;
}

}  // namespace

RgbImage load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file", path);
    const std::string magic = ppm_token(in, path);
    if (magic != "P6" && magic != "P3") throw DataError("not a PPM file (magic '" + magic + "')", path);
    RgbImage out;
    out.width = ppm_int(in, path);
    out.height = ppm_int(in, path);
    const int maxval = ppm_int(in, path);
    if (out.width == 0 || out.height == 0) throw DataError("empty PPM image", path);
    if (maxval < 1 || maxval > 65535) throw DataError("PPM maxval must be in [1, 65535]", path);
    const std::size_t n = 3 * static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height);
    out.samples.resize(n);
    const float scale = 1.0f / static_cast<float>(maxval);
    if (magic == "P3") {
        for (std::size_t i = 0; i < n; ++i) {
            const int v = ppm_int(in, path);
            if (v > maxval) throw DataError("PPM sample exceeds maxval", path);
            out.samples[i] = static_cast<float>(v) * scale;
        }
        return out;
    }
    const std::size_t bytes = maxval < 256 ? 1 : 2;
    std::vector<unsigned char> raw(n * bytes);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw DataError("truncated PPM pixel data", path);
    for (std::size_t i = 0; i < n; ++i) {
        const int v = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
        if (v > maxval) throw DataError("PPM sample exceeds maxval", path);
        out.samples[i] = static_cast<float>(v) * scale;
    }
    return out;
}

RgbImage load_image(const std::string& path) {
    std::string ext = to_lower(std::filesystem::path(path).extension().string());
    if (ext == ".png") return load_png(path);
    if (ext == ".ppm" || ext == ".pnm") return load_ppm(path);
    throw DataError("unsupported image format '" + ext + "' (PNG or PPM only)", path);
}

GrayImage to_gray(const RgbImage& image, int levels) {
    LevelMatrix m(image.height, image.width);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            const float* p = &image.samples[3 * (static_cast<std::size_t>(y) * image.width + x)];
            const double luma = 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2];
            const int level = static_cast<int>(std::floor(luma * levels));
            m(y, x) = static_cast<std::uint16_t>(std::clamp(level, 0, levels - 1));
        }
    return GrayImage(std::move(m), levels);
}

Eigen::MatrixXd glcm(const GrayImage& image, Offset offset, bool symmetric) {
    if (offset.dx == 0 && offset.dy == 0) throw std::invalid_argument("GLCM offset must be non-zero");
    if (image.width() < 2 || image.height() < 2) throw std::invalid_argument("GLCM needs an image of at least 2x2");
    const int g = image.levels();
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(g) * g, 0);
    const int x0 = std::max(0, -offset.dx), x1 = std::min(image.width(), image.width() - offset.dx);
    const int y0 = std::max(0, -offset.dy), y1 = std::min(image.height(), image.height() - offset.dy);
    const auto& px = image.pixels();
    for (int y = y0; y < y1; ++y) {
        const std::uint16_t* row = px.data() + static_cast<std::ptrdiff_t>(y) * px.cols();
        const std::uint16_t* other = px.data() + static_cast<std::ptrdiff_t>(y + offset.dy) * px.cols() + offset.dx;
        for (int x = x0; x < x1; ++x) ++counts[static_cast<std::size_t>(row[x]) * g + other[x]];
    }
    Eigen::MatrixXd c(g, g);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) c(i, j) = static_cast<double>(counts[static_cast<std::size_t>(i) * g + j]);
    if (symmetric) c += c.transpose().eval();
    return c;
}

double glcm_entropy(const GrayImage& image, const std::vector<Offset>& offsets, bool symmetric) {
    if (offsets.empty()) throw std::invalid_argument("GLCM needs at least one offset");
    double total = 0.0;
    for (const auto& o : offsets) {
        const Eigen::MatrixXd c = glcm(image, o, symmetric);
        const double sum = c.sum();
        if (sum == 0.0)
            throw std::invalid_argument("GLCM offset (" + std::to_string(o.dx) + "," + std::to_string(o.dy) +
                                        ") leaves no pixel pairs inside the image");
        double h = 0.0;
        for (Eigen::Index k = 0; k < c.size(); ++k) {
            const double v = c.data()[k];
            if (v > 0.0) {
                const double p = v / sum;
                h -= p * std::log2(p);
            }
        }
        total += h;
    }
    return total / static_cast<double>(offsets.size());
}

Histogram entropy_histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi) {
    if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
    if (!(hi > lo)) throw std::invalid_argument("histogram range is empty");
    Histogram h;
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(i == bins ? hi : lo + width * static_cast<double>(i));
    for (double v : values) {
        if (!(v >= lo && v <= hi)) throw std::invalid_argument("histogram value " + format_double(v) + " outside range");
        auto b = static_cast<std::size_t>((v - lo) / width);
        b = std::min(b, bins - 1);
        // keep the bin consistent with the stored edges
        while (b > 0 && v < h.edges[b]) --b;
        while (b + 1 < bins && v >= h.edges[b + 1]) ++b;
        ++h.counts[b];
    }
    return h;
}

Histogram entropy_histogram(const std::vector<double>& values, std::size_t bins, int levels) {
    return entropy_histogram(values, bins, 0.0, 2.0 * std::log2(static_cast<double>(levels)));
}

std::vector<ImageEntropy> directory_entropies(const std::string& dir, const GlcmOptions& options, unsigned threads) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("not a directory", dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = to_lower(e.path().extension().string());
        if (ext == ".png" || ext == ".ppm" || ext == ".pnm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no PNG or PPM images found", dir);
    std::vector<ImageEntropy> out(files.size());
    parallel_tasks(files.size(), threads, [&](std::size_t i) {
        try {
            out[i] = {fs::path(files[i]).filename().string(),
                      glcm_entropy(to_gray(load_image(files[i]), options.levels), options.offsets, options.symmetric)};
        } catch (const std::invalid_argument& e) {
            throw DataError(e.what(), files[i]);
        }
    });
    return out;
}

void write_entropy_csv(const std::string& path, const std::vector<ImageEntropy>& values) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    csv::write_row(out, {"image", "entropy"});
    for (const auto& v : values) csv::write_row(out, {v.file, format_double(v.entropy)});
}

void write_histogram_csv(const std::string& path, const Histogram& histogram) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file", path);
    csv::write_row(out, {"bin_start", "bin_end", "count"});
    for (std::size_t i = 0; i < histogram.counts.size(); ++i)
        csv::write_row(out, {format_double(histogram.edges[i]), format_double(histogram.edges[i + 1]),
                             std::to_string(histogram.counts[i])});
}

}  // namespace descan
