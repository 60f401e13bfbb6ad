#pragma once

#include <span>

#include "rrdiffuse/frame.hpp"
#include "rrdiffuse/rng.hpp"
#include "rrdiffuse/sequence_state.hpp"

namespace rrd {

/**
 * Source of per-step prediction frames. Implementations are read-only after
 * construction (or after a training step completes) and safe to share across
 * concurrent decode runs.
 *
 * Greedy mode (predict) reports the argmax token with the maximum
 * temperature-scaled softmax probability as confidence; exact ties break
 * toward the lowest token id. Sampling mode draws the token from the
 * temperature-scaled (optionally top-p truncated) distribution and reports
 * the drawn token's probability.
 */
class Predictor {
public:
    virtual ~Predictor() = default;

    virtual int vocab_size() const = 0;

    // Throws ContractError when positions are empty/unmasked and NumericError
    // on temperature <= 0.
    virtual PredictionFrame predict(const SequenceState& state, std::span<const int> positions,
                                    double temperature) const = 0;

    virtual PredictionFrame sample_candidate(const SequenceState& state, std::span<const int> positions,
                                             double temperature, double top_p, Rng& rng) const = 0;
};

}  // namespace rrd
