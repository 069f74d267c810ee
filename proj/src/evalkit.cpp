#include "sci/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sci/kernels.hpp"

namespace sci {

std::string to_string(Protocol protocol) {
    switch (protocol) {
    case Protocol::General: return "general";
    case Protocol::SameClothes: return "same_clothes";
    case Protocol::ClothChanging: return "cloth_changing";
    }
    return "general";
}

Protocol protocol_from_string(const std::string& name) {
    if (name == "general") return Protocol::General;
    if (name == "same_clothes") return Protocol::SameClothes;
    if (name == "cloth_changing") return Protocol::ClothChanging;
    throw ContractError("unknown protocol '" + name +
                        "' (valid: general, same_clothes, cloth_changing)");
}

QueryMasks validity_masks(const SampleMeta& query, std::span<const SampleMeta> gallery,
                          Protocol protocol) {
    QueryMasks masks;
    masks.junk.resize(gallery.size(), 0);
    masks.positive.resize(gallery.size(), 0);
    for (size_t j = 0; j < gallery.size(); ++j) {
        const SampleMeta& g = gallery[j];
        const bool same_pid = g.pid == query.pid;
        const bool same_cam = g.camera_id == query.camera_id;
        const bool same_clothes = g.clothes_id == query.clothes_id;
        bool junk = false, positive = false;
        switch (protocol) {
        case Protocol::General:
            junk = same_pid && same_cam;
            positive = same_pid && !junk;
            break;
        case Protocol::SameClothes:
            junk = (same_pid && same_cam) || (same_pid && !same_clothes);
            positive = same_pid && same_clothes && !junk;
            break;
        case Protocol::ClothChanging:
            junk = (same_pid && same_cam) || (same_pid && same_clothes);
            positive = same_pid && !same_clothes && !junk;
            break;
        }
        masks.junk[j] = junk ? 1 : 0;
        masks.positive[j] = positive ? 1 : 0;
    }
    return masks;
}

Tensor distance_matrix(const Tensor& queries, const Tensor& gallery) {
    if (queries.ndim() != 2 || gallery.ndim() != 2 || queries.dim(1) != gallery.dim(1))
        throw ShapeError("distance_matrix: " + shape_str(queries.shape()) + " vs " +
                         shape_str(gallery.shape()));
    auto check_rows = [](const Tensor& t, const char* which) {
        const int rows = t.dim(0), d = t.dim(1);
        auto data = t.data();
        for (int i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) {
                const double v = data[static_cast<size_t>(i) * d + j];
                acc += v * v;
            }
            if (std::abs(std::sqrt(acc) - 1.0) > 1e-3)
                throw ContractError(std::string("distance_matrix: ") + which + " row " +
                                    std::to_string(i) + " is not L2-normalized");
        }
    };
    check_rows(queries, "query");
    check_rows(gallery, "gallery");
    const int q = queries.dim(0), g = gallery.dim(0), d = queries.dim(1);
    Tensor out = Tensor::zeros({q, g});
    kernels::cosine_distance(queries.data(), gallery.data(), out.data(), q, g, d);
    return out;
}

QueryEval cmc_map(std::span<const float> dist_row, std::span<const uint8_t> junk,
                  std::span<const uint8_t> positive, int k_max,
                  std::span<const int> tie_keys) {
    if (junk.size() != dist_row.size() || positive.size() != dist_row.size())
        throw ContractError("cmc_map: mask sizes must match the gallery size");
    if (k_max < 1) throw ContractError("cmc_map: k_max must be >= 1");

    struct Entry {
        float dist;
        int key;
        bool positive;
    };
    std::vector<Entry> entries;
    entries.reserve(dist_row.size());
    for (size_t j = 0; j < dist_row.size(); ++j) {
        if (junk[j]) continue;
        const int key = tie_keys.empty() ? static_cast<int>(j) : tie_keys[j];
        entries.push_back({dist_row[j], key, positive[j] != 0});
    }

    QueryEval eval;
    eval.cmc_hits.assign(static_cast<size_t>(k_max), 0);
    const int total_pos = static_cast<int>(std::count_if(
        entries.begin(), entries.end(), [](const Entry& e) { return e.positive; }));
    if (total_pos == 0) return eval; // skipped query

    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.key < b.key;
    });

    eval.valid = true;
    int first_hit = -1;
    int seen_pos = 0;
    double ap = 0.0;
    for (size_t r = 0; r < entries.size(); ++r) {
        if (!entries[r].positive) continue;
        ++seen_pos;
        ap += static_cast<double>(seen_pos) / static_cast<double>(r + 1);
        if (first_hit < 0) first_hit = static_cast<int>(r);
    }
    eval.average_precision = ap / total_pos;
    for (int k = first_hit + 1; k <= k_max; ++k) eval.cmc_hits[static_cast<size_t>(k - 1)] = 1;
    return eval;
}

EvalResult evaluate(const Tensor& query_embeddings, std::span<const SampleMeta> query_meta,
                    const Tensor& gallery_embeddings, std::span<const SampleMeta> gallery_meta,
                    Protocol protocol, int k_max) {
    const int q = query_embeddings.dim(0);
    const int g = gallery_embeddings.dim(0);
    if (q != static_cast<int>(query_meta.size()) || g != static_cast<int>(gallery_meta.size()))
        throw ContractError("evaluate: embedding rows must match metadata entries");

    Tensor dist = distance_matrix(query_embeddings, gallery_embeddings);
    std::vector<QueryEval> per_query(static_cast<size_t>(q));
    auto dist_data = dist.data();
    kernels::parallel_for(q, [&](int64_t i) {
        const QueryMasks masks = validity_masks(query_meta[static_cast<size_t>(i)], gallery_meta, protocol);
        per_query[static_cast<size_t>(i)] =
            cmc_map(dist_data.subspan(static_cast<size_t>(i) * g, static_cast<size_t>(g)),
                    masks.junk, masks.positive, k_max);
    });

    EvalResult result;
    result.cmc.assign(static_cast<size_t>(k_max), 0.0f);
    double ap_sum = 0.0;
    std::vector<int64_t> hit_counts(static_cast<size_t>(k_max), 0);
    for (const QueryEval& e : per_query) {
        if (!e.valid) {
            ++result.num_skipped_queries;
            continue;
        }
        ++result.num_valid_queries;
        ap_sum += e.average_precision;
        for (int k = 0; k < k_max; ++k) hit_counts[static_cast<size_t>(k)] += e.cmc_hits[static_cast<size_t>(k)];
    }
    if (result.num_valid_queries == 0)
        throw ContractError("evaluate: no query has a valid positive under protocol " +
                            to_string(protocol));
    for (int k = 0; k < k_max; ++k)
        result.cmc[static_cast<size_t>(k)] =
            static_cast<float>(hit_counts[static_cast<size_t>(k)]) / static_cast<float>(result.num_valid_queries);
    result.map = static_cast<float>(ap_sum / result.num_valid_queries);
    return result;
}

} // namespace sci
