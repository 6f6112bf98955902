#include "descan/simstats.hpp"

#include "descan/common.hpp"
#include "descan/rng.hpp"

#include <algorithm>

namespace descan {

std::vector<std::string> stratified_sample(const std::map<std::string, std::string>& labels, std::size_t per_image,
                                           std::size_t max_images, std::uint64_t seed) {
    std::map<std::string, std::vector<std::string>> by_image;
    for (const auto& [key, image] : labels) by_image[image].push_back(key);
    std::vector<std::pair<std::uint64_t, const std::vector<std::string>*>> groups;
    for (const auto& [image, keys] : by_image) groups.emplace_back(groups.size(), &keys);
    if (groups.size() > max_images) {
        CounterRng rng(seed, 0);
        rng.shuffle(std::span(groups));
        groups.resize(max_images);
    }
    std::vector<std::string> out;
    for (const auto& [ordinal, keys] : groups) {
        std::vector<std::string> k = *keys;
        if (k.size() > per_image) {
            CounterRng rng(seed, 1 + ordinal);
            rng.shuffle(std::span(k));
            k.resize(per_image);
        }
        out.insert(out.end(), k.begin(), k.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

SimilaritySummary intra_inter(const EmbeddingStore& store, const std::map<std::string, std::string>& labels,
                              const SimilarityOptions& options) {
    std::vector<std::string> keys;
    std::vector<int> label_ids;
    {
        std::map<std::string, int> ids;
        for (const auto& [key, image] : labels) {
            if (!store.contains(key)) throw DataError("labeled key '" + key + "' has no embedding");
            keys.push_back(key);
            label_ids.push_back(ids.emplace(image, static_cast<int>(ids.size())).first->second);
        }
        if (ids.size() < 2) throw DataError("similarity analysis needs at least 2 images");
    }

    SimilarityBlockStream stream(store, keys, keys, options.block_size);
    const std::size_t tiles = stream.block_count();
    std::vector<Moments> intra(tiles), inter(tiles);
    std::vector<std::size_t> upper;
    for (std::size_t t = 0; t < tiles; ++t) {
        auto [r0, c0] = stream.origin(t);
        if (r0 <= c0) upper.push_back(t);
    }
    parallel_tasks(upper.size(), options.threads, [&](std::size_t u) {
        const std::size_t t = upper[u];
        const SimilarityBlock b = stream.block(t);
        for (Eigen::Index i = 0; i < b.values.rows(); ++i) {
            const std::size_t gi = b.row_begin + static_cast<std::size_t>(i);
            for (Eigen::Index j = 0; j < b.values.cols(); ++j) {
                const std::size_t gj = b.col_begin + static_cast<std::size_t>(j);
                if (gj <= gi) continue;
                (label_ids[gi] == label_ids[gj] ? intra[t] : inter[t]).add(b.values(i, j));
            }
        }
    });
    Moments in, out;
    for (std::size_t t = 0; t < tiles; ++t) {
        in.merge(intra[t]);
        out.merge(inter[t]);
    }
    if (in.n == 0) throw DataError("no image has 2 or more descriptions; intra-image similarity undefined");

    SimilaritySummary s;
    s.intra_mean = in.mean;
    s.intra_std = in.std_dev();
    s.inter_mean = out.mean;
    s.inter_std = out.std_dev();
    s.n_intra_pairs = in.n;
    s.n_inter_pairs = out.n;

    if (options.sampling != AnosimSampling::none) {
        const std::vector<std::string> sample =
            options.sampling == AnosimSampling::full
                ? keys
                : stratified_sample(labels, options.per_image, options.max_images, options.anosim.seed);
        std::vector<Eigen::Index> rows;
        std::vector<int> groups;
        std::map<std::string, int> ids;
        for (const auto& k : sample) {
            rows.push_back(store.index(k));
            groups.push_back(ids.emplace(labels.at(k), static_cast<int>(ids.size())).first->second);
        }
        s.anosim_items = sample.size();
        s.anosim_groups = ids.size();
        s.anosim = anosim(
            sample.size(), [&](std::size_t i, std::size_t j) { return 1.0 - store.cosine_rows(rows[i], rows[j]); },
            groups, options.anosim);
    }
    return s;
}

nlohmann::ordered_json to_json(const SimilaritySummary& s, const SimilarityOptions& options) {
    nlohmann::ordered_json j;
    j["intra_mean"] = s.intra_mean;
    j["intra_std"] = s.intra_std;
    j["inter_mean"] = s.inter_mean;
    j["inter_std"] = s.inter_std;
    j["n_intra_pairs"] = s.n_intra_pairs;
    j["n_inter_pairs"] = s.n_inter_pairs;
    j["std_convention"] = "population std over pairs";
    if (s.anosim) {
        j["anosim"] = to_json(*s.anosim);
        j["anosim"]["sampling"] = options.sampling == AnosimSampling::full ? "full" : "stratified";
        j["anosim"]["items"] = s.anosim_items;
        j["anosim"]["groups"] = s.anosim_groups;
        if (options.sampling == AnosimSampling::stratified) {
            j["anosim"]["per_image"] = options.per_image;
            j["anosim"]["max_images"] = options.max_images;
        }
    } else {
        j["anosim"] = nullptr;
    }
    return j;
}

}  // namespace descan
