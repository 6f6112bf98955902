#include "descan/embeddings.hpp"

#include "descan/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace descan {

template <typename Scalar>
BasicEmbeddingStore<Scalar>::BasicEmbeddingStore(std::vector<std::string> keys, Matrix vectors)
    : keys_(std::move(keys)), raw_(std::move(vectors)) {
    if (static_cast<Eigen::Index>(keys_.size()) != raw_.rows())
        throw DataError("embedding store: " + std::to_string(keys_.size()) + " keys for " +
                        std::to_string(raw_.rows()) + " vectors");
    const Eigen::Index n = raw_.rows();
    squared_norms_.resize(n);
    index_.reserve(keys_.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& key = keys_[static_cast<std::size_t>(i)];
        if (!index_.emplace(key, i).second) throw DataError("duplicate key '" + key + "'");
        const double sq = ordered_dot(raw_.row(i), raw_.row(i));
        if (!(sq > 0.0) || !std::isfinite(sq)) throw DataError("zero-norm or non-finite vector for key '" + key + "'");
        squared_norms_(i) = sq;
    }
}

template <typename Scalar>
Eigen::Index BasicEmbeddingStore<Scalar>::index(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw DataError("missing key '" + key + "'");
    return it->second;
}

template <typename Scalar>
std::optional<Eigen::Index> BasicEmbeddingStore<Scalar>::find(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

template <typename Scalar>
BasicEmbeddingStore<Scalar> BasicEmbeddingStore<Scalar>::subset(const std::vector<std::string>& keys) const {
    Matrix m(static_cast<Eigen::Index>(keys.size()), raw_.cols());
    for (std::size_t i = 0; i < keys.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = raw_.row(index(keys[i]));
    return BasicEmbeddingStore(keys, std::move(m));
}

template class BasicEmbeddingStore<float>;
template class BasicEmbeddingStore<double>;

// ---------------------------------------------------------------------------
// Files

VectorFormat vector_format_from_path(const std::string& path) {
    auto ends = [&](std::string_view s) { return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0; };
    return (ends(".bin") || ends(".emb")) ? VectorFormat::binary : VectorFormat::text;
}

namespace {

EmbeddingStore load_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file", path);
    std::string line;
    std::size_t n = 0;
    std::size_t count = 0, dim = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!trim(line).empty()) break;
    }
    {
        const auto head = split_whitespace(line);
        if (head.size() != 2) throw DataError("header must be 'count dim'", path, n);
        try {
            count = std::stoull(head[0]);
            dim = std::stoull(head[1]);
        } catch (const std::logic_error&) {
            throw DataError("header must be 'count dim'", path, n);
        }
        if (dim == 0 && count > 0) throw DataError("dimension must be positive", path, n);
    }
    std::vector<std::string> keys;
    keys.reserve(count);
    RowMatrix<float> m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        if (keys.size() == count) throw DataError("more vectors than declared count " + std::to_string(count), path, n);
        const auto parts = split_whitespace(line);
        if (parts.size() != dim + 1)
            throw DataError("dimension mismatch: expected " + std::to_string(dim) + " values, got " +
                                std::to_string(parts.size() - 1),
                            path, n);
        const auto row = static_cast<Eigen::Index>(keys.size());
        for (std::size_t j = 0; j < dim; ++j) {
            const auto& tok = parts[j + 1];
            float v = 0.0f;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || ptr != tok.data() + tok.size())
                throw DataError("bad number '" + tok + "'", path, n);
            m(row, static_cast<Eigen::Index>(j)) = v;
        }
        keys.push_back(parts[0]);
        if (m.row(row).squaredNorm() == 0.0f) throw DataError("zero-norm vector for key '" + parts[0] + "'", path, n);
    }
    if (keys.size() != count)
        throw DataError("declared " + std::to_string(count) + " vectors, found " + std::to_string(keys.size()), path);
    try {
        return EmbeddingStore(std::move(keys), std::move(m));
    } catch (const DataError& e) {
        throw DataError(e.what(), path);
    }
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated binary vector file", path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

EmbeddingStore load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file", path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "EMB1", 4) != 0) throw DataError("bad magic (expected EMB1)", path);
    const std::uint32_t count = read_u32(in, path);
    const std::uint32_t dim = read_u32(in, path);
    std::vector<std::string> keys;
    keys.reserve(count);
    RowMatrix<float> m(count, dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = read_u32(in, path);
        std::string key(len, '\0');
        if (!in.read(key.data(), len)) throw DataError("truncated key in entry " + std::to_string(i), path);
        for (std::uint32_t j = 0; j < dim; ++j) m(i, j) = std::bit_cast<float>(read_u32(in, path));
        if (m.row(i).squaredNorm() == 0.0f) throw DataError("zero-norm vector for key '" + key + "'", path);
        keys.push_back(std::move(key));
    }
    try {
        return EmbeddingStore(std::move(keys), std::move(m));
    } catch (const DataError& e) {
        throw DataError(e.what(), path);
    }
}

}  // namespace

EmbeddingStore load_vectors(const std::string& path, VectorFormat format) {
    return format == VectorFormat::text ? load_text(path) : load_binary(path);
}

EmbeddingStore load_vectors(const std::string& path) { return load_vectors(path, vector_format_from_path(path)); }

void save_vectors(const EmbeddingStore& store, const std::string& path, VectorFormat format) {
    std::ofstream out(path, format == VectorFormat::binary ? std::ios::binary : std::ios::out);
    if (!out) throw DataError("cannot write file", path);
    const auto& m = store.raw_matrix();
    if (format == VectorFormat::text) {
        out << store.size() << ' ' << store.dimension() << '\n';
        char buf[32];
        for (std::size_t i = 0; i < store.size(); ++i) {
            out << store.keys()[i];
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(static_cast<Eigen::Index>(i), j));
                out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
            }
            out << '\n';
        }
        return;
    }
    out.write("EMB1", 4);
    write_u32(out, static_cast<std::uint32_t>(store.size()));
    write_u32(out, static_cast<std::uint32_t>(store.dimension()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& key = store.keys()[i];
        write_u32(out, static_cast<std::uint32_t>(key.size()));
        out.write(key.data(), static_cast<std::streamsize>(key.size()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            write_u32(out, std::bit_cast<std::uint32_t>(m(static_cast<Eigen::Index>(i), j)));
    }
}

// ---------------------------------------------------------------------------
// Tiled similarity

SimilarityBlockStream::SimilarityBlockStream(const EmbeddingStore& store, std::vector<std::string> rows,
                                             std::vector<std::string> cols, std::size_t block_size)
    : store_(store), rows_(std::move(rows)), cols_(std::move(cols)), block_(block_size) {
    if (block_ == 0) throw std::invalid_argument("block size must be >= 1");
    row_idx_.reserve(rows_.size());
    col_idx_.reserve(cols_.size());
    for (const auto& k : rows_) row_idx_.push_back(store_.index(k));
    for (const auto& k : cols_) col_idx_.push_back(store_.index(k));
    row_tiles_ = (rows_.size() + block_ - 1) / block_;
    col_tiles_ = (cols_.size() + block_ - 1) / block_;
}

SimilarityBlock SimilarityBlockStream::block(std::size_t t) const {
    if (t >= block_count()) throw std::out_of_range("tile index");
    SimilarityBlock b;
    b.row_begin = (t / col_tiles_) * block_;
    b.col_begin = (t % col_tiles_) * block_;
    const std::size_t nr = std::min(block_, rows_.size() - b.row_begin);
    const std::size_t nc = std::min(block_, cols_.size() - b.col_begin);
    b.row_keys = std::span<const std::string>(rows_).subspan(b.row_begin, nr);
    b.col_keys = std::span<const std::string>(cols_).subspan(b.col_begin, nc);
    b.values.resize(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
    for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j)
            b.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                store_.cosine_rows(row_idx_[b.row_begin + i], col_idx_[b.col_begin + j]);
    return b;
}

std::optional<SimilarityBlock> SimilarityBlockStream::next() {
    if (cursor_ >= block_count()) return std::nullopt;
    return block(cursor_++);
}

SimilarityBlockStream pairwise_blocks(const EmbeddingStore& store, std::vector<std::string> rows,
                                      std::vector<std::string> cols, std::size_t block_size) {
    return SimilarityBlockStream(store, std::move(rows), std::move(cols), block_size);
}

void for_each_block(const SimilarityBlockStream& stream, unsigned threads,
                    const std::function<void(std::size_t, const SimilarityBlock&)>& visit) {
    parallel_tasks(stream.block_count(), threads, [&](std::size_t t) { visit(t, stream.block(t)); });
}

Eigen::MatrixXd similarity_matrix(const EmbeddingStore& store, const std::vector<std::string>& keys) {
    std::vector<Eigen::Index> idx;
    idx.reserve(keys.size());
    for (const auto& k : keys) idx.push_back(store.index(k));
    const auto n = static_cast<Eigen::Index>(keys.size());
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s(i, i) = store.cosine_rows(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = i + 1; j < n; ++j)
            s(i, j) = s(j, i) = store.cosine_rows(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return s;
}

}  // namespace descan
