#pragma once

#include "rrdiffuse/predictor.hpp"
#include "rrdiffuse/strategy.hpp"
#include "rrdiffuse/trace.hpp"

namespace rrd {

// Greedy mode asks the predictor for argmax frames (evaluation); Sample mode
// draws from the temperature-scaled distribution (dataset collection).
enum class DecodeMode { Greedy, Sample };

/**
 * Runs the unmask-remask loop to completion: query the predictor on the
 * active block's masked positions, let the strategy pick finalizations, apply
 * them, repeat. One step is one predictor call, so the trace length is the
 * run's NFE; strategies guarantee at least one finalization per step, so
 * NFE <= gen_len.
 *
 * The run's randomness (sampling draws, Random position rule) comes from a
 * stream derived from state.config().seed; identical (seed, prompt, config,
 * predictor) inputs produce byte-identical serialized traces.
 */
DecodeTrace run_decode(SequenceState state, const Predictor& predictor, const StrategyConfig& strategy,
                       DecodeMode mode = DecodeMode::Greedy);

}  // namespace rrd
