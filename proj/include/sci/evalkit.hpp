#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sci/synthdata.hpp"
#include "sci/tensor.hpp"

namespace sci {

/// Retrieval protocol: which gallery items are junk (removed before
/// ranking) and which count as correct matches for a query.
enum class Protocol { General, SameClothes, ClothChanging };

std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& name); // ContractError listing valid modes

/// Per-query masks over the gallery, 1 = member.
struct QueryMasks {
    std::vector<uint8_t> junk;
    std::vector<uint8_t> positive; // subset of non-junk
};

QueryMasks validity_masks(const SampleMeta& query, std::span<const SampleMeta> gallery,
                          Protocol protocol);

/// Cosine distance matrix 1 − Q·Gᵀ. Rows must be L2-normalized (norm within
/// 1e-3 of 1), ContractError otherwise.
Tensor distance_matrix(const Tensor& queries, const Tensor& gallery);

/// One query's ranking metrics. Junk entries are removed, the remaining
/// gallery is sorted ascending by distance with ties broken by ascending
/// tie_key (original gallery index by default).
struct QueryEval {
    bool valid = false;              // false when no positive survives junking
    std::vector<uint8_t> cmc_hits;   // k = 1..k_max
    double average_precision = 0.0;
};

QueryEval cmc_map(std::span<const float> dist_row, std::span<const uint8_t> junk,
                  std::span<const uint8_t> positive, int k_max,
                  std::span<const int> tie_keys = {});

struct EvalResult {
    std::vector<float> cmc; // Rank-1..Rank-k_max accuracies
    float map = 0.0f;
    int num_valid_queries = 0;
    int num_skipped_queries = 0;

    float rank(int k) const { return cmc.at(static_cast<size_t>(k - 1)); }
};

/// Aggregate over all queries with at least one valid positive. Per-query
/// work runs in parallel (capped by SCI_THREADS) with results identical to
/// the serial order; EvaluationError (ContractError) if no query is valid.
EvalResult evaluate(const Tensor& query_embeddings, std::span<const SampleMeta> query_meta,
                    const Tensor& gallery_embeddings, std::span<const SampleMeta> gallery_meta,
                    Protocol protocol, int k_max);

} // namespace sci
