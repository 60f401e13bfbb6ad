#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rrdiffuse/frame.hpp"
#include "rrdiffuse/strategy.hpp"
#include "rrdiffuse/types.hpp"

namespace rrd {

// full keeps per-step prediction frames in the serialized trace; summary
// drops them (frame replays then become impossible on the reloaded trace).
enum class TraceLevel { Summary, Full };

struct StepRecord {
    int step = 0;
    int block = 0;
    PredictionFrame frame;
    std::vector<FinalizeEvent> finalizations;
};

/**
 * Complete record of one decode run: config snapshot, one record per
 * predictor call (so steps.size() == NFE), and the final response. Across the
 * ordered finalization events each response position appears exactly once.
 *
 * Serialized as JSON Lines: a header
 *   {"v":1,"config":{...},"prompt":[...]}
 * followed by one record per step
 *   {"step":int,"block":int,"preds":[[pos,token,conf],...],
 *    "final":[[pos,token,conf,"reason"],...]}
 */
struct DecodeTrace {
    DecodeConfig decode_config;
    StrategyConfig strategy_config;
    std::vector<TokenId> prompt;
    std::vector<StepRecord> steps;
    std::vector<TokenId> final_response;

    int nfe() const { return static_cast<int>(steps.size()); }

    // Response truncated at the first EOS (exclusive).
    std::vector<TokenId> truncated_response() const;

    // Structural checks: exactly-once coverage, nondecreasing block order,
    // final_response consistent with the events. Throws ContractError.
    void validate() const;
};

void write_trace_jsonl(const DecodeTrace& trace, std::ostream& out, TraceLevel level);
std::string trace_to_jsonl(const DecodeTrace& trace, TraceLevel level);
void write_trace_file(const DecodeTrace& trace, const std::string& path, TraceLevel level);

// Throws FormatError on malformed input (bad JSON, unknown reason tags,
// missing header) and ContractError when the reconstructed trace is
// inconsistent.
DecodeTrace read_trace_jsonl(std::istream& in);
DecodeTrace read_trace_file(const std::string& path);

}  // namespace rrd
