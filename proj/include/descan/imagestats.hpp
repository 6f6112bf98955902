#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace descan {

using LevelMatrix = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Gray levels in [0, levels), indexed (row = y, col = x).
class GrayImage {
public:
    GrayImage() = default;
    /// Throws std::invalid_argument when a pixel is outside [0, levels).
    GrayImage(LevelMatrix pixels, int levels);

    int width() const noexcept { return static_cast<int>(pixels_.cols()); }
    int height() const noexcept { return static_cast<int>(pixels_.rows()); }
    int levels() const noexcept { return levels_; }
    const LevelMatrix& pixels() const noexcept { return pixels_; }
    std::uint16_t at(int x, int y) const { return pixels_(y, x); }

private:
    LevelMatrix pixels_;
    int levels_ = 0;
};

/// Interleaved RGB samples scaled to [0, 1].
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<float> samples;  // 3 * width * height
};

RgbImage load_png(const std::string& path);
/// Binary (P6) and ASCII (P3) portable pixmaps, maxval up to 65535.
RgbImage load_ppm(const std::string& path);
/// Dispatches on the extension: .png, .ppm or .pnm.
RgbImage load_image(const std::string& path);

/// Rec. 709 luma, uniformly quantized: level = min(levels - 1, floor(luma * levels)).
GrayImage to_gray(const RgbImage& image, int levels = 64);

struct Offset {
    int dx = 1;
    int dy = 0;
};

inline const std::vector<Offset> kDefaultOffsets{{1, 0}, {0, 1}};

/// Co-occurrence counts for one offset; symmetric adds the transpose.
Eigen::MatrixXd glcm(const GrayImage& image, Offset offset, bool symmetric = true);

/// Shannon entropy in bits of the normalized co-occurrence matrix, averaged
/// over offsets.
double glcm_entropy(const GrayImage& image, const std::vector<Offset>& offsets = kDefaultOffsets, bool symmetric = true);

struct Histogram {
    std::vector<double> edges;          // bins + 1 ascending edges
    std::vector<std::size_t> counts;
};

/// Equal-width bins over [lo, hi]; the top edge is inclusive. Values outside
/// the range are rejected.
Histogram entropy_histogram(const std::vector<double>& values, std::size_t bins, double lo, double hi);
/// Range [0, 2 log2 levels], the bounds of GLCM entropy.
Histogram entropy_histogram(const std::vector<double>& values, std::size_t bins, int levels = 64);

struct ImageEntropy {
    std::string file;
    double entropy = 0.0;
};

struct GlcmOptions {
    int levels = 64;
    std::vector<Offset> offsets = kDefaultOffsets;
    bool symmetric = true;
    std::size_t bins = 32;
};

/// Entropy of every .png/.ppm/.pnm file in dir (sorted by file name).
std::vector<ImageEntropy> directory_entropies(const std::string& dir, const GlcmOptions& options = {}, unsigned threads = 1);

void write_entropy_csv(const std::string& path, const std::vector<ImageEntropy>& values);
void write_histogram_csv(const std::string& path, const Histogram& histogram);

}  // namespace descan
