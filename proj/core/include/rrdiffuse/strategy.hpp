#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rrdiffuse/frame.hpp"
#include "rrdiffuse/rng.hpp"
#include "rrdiffuse/sequence_state.hpp"

namespace rrd {

enum class StrategyKind { Vanilla, Threshold, R2 };

// How a token cluster picks the position to decode.
enum class PositionRule { Conf, Mid, Random };
// Which statistic of a streak's confidences the temporal check compares.
enum class TemporalRule { Last, Ave, Max };

std::string_view to_string(StrategyKind k);
std::string_view to_string(PositionRule r);
std::string_view to_string(TemporalRule r);
StrategyKind strategy_kind_from_string(std::string_view s);
PositionRule position_rule_from_string(std::string_view s);
TemporalRule temporal_rule_from_string(std::string_view s);

/**
 * Per-step finalization policy. Vanilla commits the top-k confidences,
 * Threshold commits everything above tau, R2 layers the redundancy rules on
 * top of a base threshold: confidence-window aggregation, token-cluster
 * aggregation, and the multi-step consistency check, applied in that order
 * with each later rule seeing only still-masked positions.
 */
struct StrategyConfig {
    StrategyKind kind = StrategyKind::Threshold;

    int top_k = 1;     // Vanilla
    double tau = 0.9;  // Threshold

    // R2 parameters.
    double tau_base = 0.9;
    double tau_s = 0.8;
    double tau_t = 0.7;
    int m_consec = 3;
    int window = 4;
    PositionRule position_rule = PositionRule::Conf;
    TemporalRule temporal_rule = TemporalRule::Last;
    bool conf_cluster_enabled = true;
    bool token_cluster_enabled = true;
    bool temporal_enabled = true;

    // Throws ConfigError when any invariant fails (k >= 1, thresholds in
    // (0,1], m_consec >= 1, window >= 2).
    void validate() const;

    // Threshold presets transcribed per model/dataset pair; throws
    // ConfigError on an unknown name.
    static StrategyConfig preset(std::string_view name);
    static std::vector<std::string> preset_names();
};

/**
 * Streak bookkeeping for the temporal rule: per still-masked position, the
 * current top-1 token, and the confidence sequence over the consecutive steps
 * that kept predicting it. A changed top-1 resets the streak to length 1.
 * Entries exist only for positions still masked in the active block.
 */
class PositionHistory {
public:
    struct Streak {
        TokenId token = 0;
        std::vector<double> confidences;  // one per step of the streak
        int length() const { return static_cast<int>(confidences.size()); }
    };

    // Folds one frame into the streaks. Idempotent per frame.step so a loop
    // and a strategy may both call it.
    void observe(const PredictionFrame& frame);

    void erase_position(int position) { streaks_.erase(position); }
    void clear();

    bool has(int position) const { return streaks_.count(position) != 0; }
    const Streak& at(int position) const;
    int streak_length(int position) const;
    std::size_t size() const { return streaks_.size(); }

private:
    std::map<int, Streak> streaks_;
    int last_observed_step_ = -1;
};

// Events emitted by one r2_step call, for redundancy accounting. Each
// triggered confidence window and each triggered token cluster is one spatial
// point; each temporal finalization is one temporal point. Fallbacks encode
// progress, not redundancy, and are never counted.
struct StepEvents {
    int conf_cluster_windows = 0;
    int token_cluster_events = 0;
    int temporal_events = 0;
};

struct StrategyStepResult {
    std::vector<FinalizeEvent> finalizations;
    StepEvents events;
};

// Baselines ------------------------------------------------------------

// Top-k entries by confidence (ties toward the lowest position), capped at
// the number of masked positions. Reason TopK.
std::vector<FinalizeEvent> vanilla_topk(const PredictionFrame& frame, const SequenceState& state, int k);

// Every entry with confidence strictly above tau (reason Threshold); when
// none qualify, the single top-1 entry with reason Fallback.
std::vector<FinalizeEvent> threshold_parallel(const PredictionFrame& frame, const SequenceState& state,
                                              double tau);

// R2 rules --------------------------------------------------------------

struct ConfClusterResult {
    std::vector<FinalizeEvent> finalizations;
    int windows = 0;
};

// Slides exactly-w windows left to right over each maximal run of contiguous
// masked positions; a window whose mean confidence exceeds tau_s is decoded
// whole and the scan resumes after it (greedy, non-overlapping). Runs shorter
// than w yield nothing.
ConfClusterResult confidence_cluster_aggregate(const PredictionFrame& frame, const SequenceState& state,
                                               double tau_s, int w);

struct TokenClusterResult {
    std::vector<FinalizeEvent> finalizations;
    int clusters_triggered = 0;
};

// Finds maximal runs (length >= 2) of adjacent positions predicting the same
// token; per cluster picks one position by `rule` and decodes it iff its
// confidence exceeds tau_s. `rng` is consumed once per cluster in scan order
// when rule == Random (may be null otherwise).
TokenClusterResult token_cluster_aggregate(const PredictionFrame& frame, const SequenceState& state,
                                           double tau_s, PositionRule rule, Rng* rng = nullptr);

// Finalizes positions whose top-1 streak is at least m_consec steps long and
// whose streak-confidence indicator (per `rule`) exceeds tau_t. The history
// must already include `frame`.
std::vector<FinalizeEvent> temporal_consistency(const PositionHistory& history, const PredictionFrame& frame,
                                                int m_consec, double tau_t, TemporalRule rule);

// Full R2 composition: base threshold, then confidence windows, then token
// clusters, then the temporal check, each on the positions the previous
// stages left masked; a top-1 fallback guarantees progress. Updates `history`
// with the frame (idempotent per step).
StrategyStepResult r2_step(const PredictionFrame& frame, const SequenceState& state, PositionHistory& history,
                           const StrategyConfig& cfg, Rng& rng);

// Dispatch on cfg.kind; vanilla/threshold ignore history and rng.
StrategyStepResult strategy_step(const PredictionFrame& frame, const SequenceState& state,
                                 PositionHistory& history, const StrategyConfig& cfg, Rng& rng);

}  // namespace rrd
