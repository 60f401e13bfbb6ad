#include "rrdiffuse/frame.hpp"

#include <cmath>
#include <string>

#include "rrdiffuse/errors.hpp"

namespace rrd {

const FrameEntry* PredictionFrame::find(int position) const {
    // Entries are ascending; linear scan is fine at block sizes.
    for (const auto& e : entries) {
        if (e.position == position) return &e;
        if (e.position > position) break;
    }
    return nullptr;
}

void PredictionFrame::validate_against(std::span<const int> positions, int vocab_size) const {
    if (entries.size() != positions.size())
        throw ContractError("frame has " + std::to_string(entries.size()) + " entries for " +
                            std::to_string(positions.size()) + " queried positions");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.position != positions[i])
            throw ContractError("frame entry " + std::to_string(i) + " covers position " +
                                std::to_string(e.position) + ", expected " + std::to_string(positions[i]));
        if (e.token < 0 || e.token >= vocab_size)
            throw ContractError("frame token " + std::to_string(e.token) + " outside vocabulary");
        if (!(e.confidence >= 0.0) || !(e.confidence <= 1.0))
            throw ContractError("frame confidence " + std::to_string(e.confidence) + " outside [0,1]");
    }
    if (distributions.empty()) return;
    if (distributions.size() != entries.size())
        throw ContractError("frame distributions not parallel to entries");
    for (std::size_t i = 0; i < distributions.size(); ++i) {
        const auto& row = distributions[i];
        if (static_cast<int>(row.size()) != vocab_size)
            throw ContractError("frame distribution row of wrong width");
        double sum = 0.0, maxp = 0.0;
        for (const double p : row) {
            sum += p;
            if (p > maxp) maxp = p;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ContractError("frame distribution does not sum to 1");
        if (std::abs(maxp - entries[i].confidence) > 1e-6)
            throw ContractError("frame confidence does not match distribution maximum");
    }
}

}  // namespace rrd
