#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rrdiffuse/trace.hpp"

namespace rrd {

enum class CountsKind { Actual, Potential };

/**
 * Redundancy score of one decode trace. Each triggered spatial aggregation
 * (confidence window or token cluster) is one point of R_s; each temporal
 * finalization is one point of R_t; R_total = R_s + R_t exactly. breakdown
 * holds per-reason finalization counts for Actual reports and per-rule
 * trigger counts for Potential ones.
 */
struct RedundancyReport {
    long r_s = 0;
    long r_t = 0;
    long r_total = 0;
    std::map<FinalizeReason, long> breakdown;
    CountsKind kind = CountsKind::Actual;
};

// Counts the events a trace actually triggered. Confidence windows finalize
// exactly `window` tokens each, so the per-step ConfCluster finalization
// count divided by the config's window recovers the window count (a
// non-multiple is a malformed trace -> FormatError). Non-R2 traces score all
// zeros; Fallback finalizations are never counted.
RedundancyReport score_trace(const DecodeTrace& trace);

// Replays the R2 rules over the recorded frames without altering
// finalizations, counting would-be triggers per rule independently (no
// mutual exclusion between rules):
//   - confidence windows: greedy exactly-w scan per frame;
//   - token clusters: maximal-run trigger test per frame (the Random
//     position rule is evaluated as Conf so replays stay deterministic);
//   - temporal: one would-be trigger per (position, streak), at the first
//     step the streak satisfies the check.
// Requires full-level traces; throws MetricError when frames are absent.
RedundancyReport potential_triggers(const DecodeTrace& trace, const StrategyConfig& thresholds);

// 1 - distinct/total over adjacent bigrams; needs length >= 2 (MetricError).
double repeated_bigram_rate(std::span<const TokenId> tokens);

// unique/total token ratio; needs a nonempty list (MetricError).
double lexical_diversity(std::span<const TokenId> tokens);

// Total non-overlapping, case-insensitive occurrences of any marker, scanned
// left to right. Throws ConfigError on an empty marker list.
int template_marker_count(std::string_view text, std::span<const std::string> markers);

// Common fixed reasoning lead-ins; user-extensible via config.
const std::vector<std::string>& default_template_markers();

// One row per trace: trace_id,nfe,R_s,R_t,R_total,bigram_rate,lex_div,template_count.
// Metric fields that are undefined for a response (too short) are left empty.
struct TraceAnalysisRow {
    std::string trace_id;
    int nfe = 0;
    long r_s = 0, r_t = 0, r_total = 0;
    double bigram_rate = 0.0;
    bool bigram_defined = false;
    double lex_div = 0.0;
    bool lex_div_defined = false;
    int template_count = 0;
};

TraceAnalysisRow analyze_trace(const std::string& trace_id, const DecodeTrace& trace,
                               std::span<const std::string> markers);
std::string analysis_csv(std::span<const TraceAnalysisRow> rows);

}  // namespace rrd
