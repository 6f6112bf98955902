#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace descan {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fixed-order double-precision dot product. Summation order depends only
/// on the length, so the same pair always yields the same bits regardless
/// of which routine (single pair, tile, search) asks for it.
template <typename DerivedA, typename DerivedB>
double ordered_dot(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    const Eigen::Index n = a.size();
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    Eigen::Index i = 0;
    for (; i + 4 <= n; i += 4) {
        acc[0] += static_cast<double>(a(i)) * static_cast<double>(b(i));
        acc[1] += static_cast<double>(a(i + 1)) * static_cast<double>(b(i + 1));
        acc[2] += static_cast<double>(a(i + 2)) * static_cast<double>(b(i + 2));
        acc[3] += static_cast<double>(a(i + 3)) * static_cast<double>(b(i + 3));
    }
    for (; i < n; ++i) acc[0] += static_cast<double>(a(i)) * static_cast<double>(b(i));
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double clamp_unit(double c) { return c > 1.0 ? 1.0 : (c < -1.0 ? -1.0 : c); }

/// Cosine similarity of two arbitrary dense vectors, accumulated in double.
template <typename DerivedA, typename DerivedB>
double cosine(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    const double aa = ordered_dot(a, a);
    const double bb = ordered_dot(b, b);
    if (aa == 0.0 || bb == 0.0) throw std::invalid_argument("cosine of a zero vector");
    return clamp_unit(ordered_dot(a, b) / std::sqrt(aa * bb));
}

/// Keyed vectors of one dimension. Raw values are kept in Scalar precision;
/// squared norms in double are cached at construction.
template <typename Scalar>
class BasicEmbeddingStore {
public:
    using Matrix = RowMatrix<Scalar>;

    BasicEmbeddingStore() = default;
    /// Throws DataError on duplicate keys, zero vectors or a key/row mismatch.
    BasicEmbeddingStore(std::vector<std::string> keys, Matrix vectors);

    std::size_t size() const noexcept { return keys_.size(); }
    Eigen::Index dimension() const noexcept { return raw_.cols(); }
    const std::vector<std::string>& keys() const noexcept { return keys_; }

    bool contains(const std::string& key) const { return index_.count(key) > 0; }
    /// Row index of key; throws DataError("missing key ...").
    Eigen::Index index(const std::string& key) const;
    std::optional<Eigen::Index> find(const std::string& key) const;

    auto raw(Eigen::Index row) const { return raw_.row(row); }
    double norm(Eigen::Index row) const { return std::sqrt(squared_norms_(row)); }
    double squared_norm(Eigen::Index row) const { return squared_norms_(row); }
    const Matrix& raw_matrix() const noexcept { return raw_; }

    /// Cosine between stored rows, clamped to [-1, 1]. Identical rows give exactly 1.
    double cosine_rows(Eigen::Index i, Eigen::Index j) const {
        return clamp_unit(ordered_dot(raw_.row(i), raw_.row(j)) / std::sqrt(squared_norms_(i) * squared_norms_(j)));
    }
    double cosine(const std::string& u, const std::string& v) const { return cosine_rows(index(u), index(v)); }

    /// Store restricted to the given keys (in that order).
    BasicEmbeddingStore subset(const std::vector<std::string>& keys) const;

private:
    std::vector<std::string> keys_;
    std::unordered_map<std::string, Eigen::Index> index_;
    Matrix raw_;
    Eigen::VectorXd squared_norms_;
};

using EmbeddingStore = BasicEmbeddingStore<float>;

extern template class BasicEmbeddingStore<float>;
extern template class BasicEmbeddingStore<double>;

enum class VectorFormat { text, binary };

VectorFormat vector_format_from_path(const std::string& path);

/// Text: "count dim" header then "key v1 ... vdim" per line.
/// Binary: "EMB1", u32 count, u32 dim, then per entry u32 key length, key
/// bytes, dim little-endian f32.
EmbeddingStore load_vectors(const std::string& path, VectorFormat format);
EmbeddingStore load_vectors(const std::string& path);
void save_vectors(const EmbeddingStore& store, const std::string& path, VectorFormat format);

/// One tile of a cosine-similarity matrix.
struct SimilarityBlock {
    std::size_t row_begin = 0;  // offsets into the requested row/column key lists
    std::size_t col_begin = 0;
    std::span<const std::string> row_keys;
    std::span<const std::string> col_keys;
    Eigen::MatrixXd values;
};

/// Lazily yields tiles covering rows x cols exactly once, row-major over tiles.
class SimilarityBlockStream {
public:
    SimilarityBlockStream(const EmbeddingStore& store, std::vector<std::string> rows, std::vector<std::string> cols,
                          std::size_t block_size);

    std::optional<SimilarityBlock> next();
    std::size_t block_count() const noexcept { return row_tiles_ * col_tiles_; }
    /// Computes tile t (0-based, row-major); pure, safe to call concurrently.
    SimilarityBlock block(std::size_t t) const;
    /// (row_begin, col_begin) of tile t without computing it.
    std::pair<std::size_t, std::size_t> origin(std::size_t t) const {
        return {(t / col_tiles_) * block_, (t % col_tiles_) * block_};
    }
    std::size_t block_size() const noexcept { return block_; }

    const std::vector<std::string>& rows() const noexcept { return rows_; }
    const std::vector<std::string>& cols() const noexcept { return cols_; }

private:
    const EmbeddingStore& store_;
    std::vector<std::string> rows_, cols_;
    std::vector<Eigen::Index> row_idx_, col_idx_;
    std::size_t block_;
    std::size_t row_tiles_, col_tiles_;
    std::size_t cursor_ = 0;
};

SimilarityBlockStream pairwise_blocks(const EmbeddingStore& store, std::vector<std::string> rows,
                                      std::vector<std::string> cols, std::size_t block_size);

/// Runs visit(tile_index, block) over every tile on a worker pool. Tiles are
/// independent; callers keep per-tile results and merge them in tile order.
void for_each_block(const SimilarityBlockStream& stream, unsigned threads,
                    const std::function<void(std::size_t, const SimilarityBlock&)>& visit);

/// Dense cosine matrix over the given keys (small inputs, e.g. a lexicon).
Eigen::MatrixXd similarity_matrix(const EmbeddingStore& store, const std::vector<std::string>& keys);

}  // namespace descan
