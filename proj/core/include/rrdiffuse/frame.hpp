#pragma once

#include <span>
#include <vector>

#include "rrdiffuse/types.hpp"

namespace rrd {

struct FrameEntry {
    int position = 0;       // response-relative index
    TokenId token = 0;      // top-1 prediction
    double confidence = 0;  // gamma in [0, 1]

    bool operator==(const FrameEntry&) const = default;
};

/**
 * One step's predictions for the queried masked positions: top-1 token plus
 * confidence per position, optionally the full distribution (debug mode).
 * Entries are kept in ascending position order and cover each queried
 * position exactly once.
 */
struct PredictionFrame {
    int step = 0;
    std::vector<FrameEntry> entries;
    // Optional; when nonempty, parallel to entries, each row of vocab size.
    std::vector<std::vector<double>> distributions;

    const FrameEntry* find(int position) const;

    // Enforces the frame contract against the queried positions: bijective
    // coverage, ascending order, confidences in [0,1], and (when present)
    // distributions that sum to 1 within 1e-6 with gamma equal to their
    // maximum within 1e-6. Throws ContractError.
    void validate_against(std::span<const int> positions, int vocab_size) const;
};

}  // namespace rrd
