#include "rrdiffuse/strategy.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "rrdiffuse/errors.hpp"

namespace rrd {

std::string_view to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::Vanilla: return "vanilla";
        case StrategyKind::Threshold: return "threshold";
        case StrategyKind::R2: return "r2";
    }
    throw ContractError("invalid StrategyKind");
}

std::string_view to_string(PositionRule r) {
    switch (r) {
        case PositionRule::Conf: return "conf";
        case PositionRule::Mid: return "mid";
        case PositionRule::Random: return "random";
    }
    throw ContractError("invalid PositionRule");
}

std::string_view to_string(TemporalRule r) {
    switch (r) {
        case TemporalRule::Last: return "last";
        case TemporalRule::Ave: return "ave";
        case TemporalRule::Max: return "max";
    }
    throw ContractError("invalid TemporalRule");
}

StrategyKind strategy_kind_from_string(std::string_view s) {
    if (s == "vanilla") return StrategyKind::Vanilla;
    if (s == "threshold") return StrategyKind::Threshold;
    if (s == "r2") return StrategyKind::R2;
    throw FormatError("unknown strategy kind: '" + std::string(s) + "'");
}

PositionRule position_rule_from_string(std::string_view s) {
    if (s == "conf") return PositionRule::Conf;
    if (s == "mid") return PositionRule::Mid;
    if (s == "random") return PositionRule::Random;
    throw FormatError("unknown position rule: '" + std::string(s) + "'");
}

TemporalRule temporal_rule_from_string(std::string_view s) {
    if (s == "last") return TemporalRule::Last;
    if (s == "ave") return TemporalRule::Ave;
    if (s == "max") return TemporalRule::Max;
    throw FormatError("unknown temporal rule: '" + std::string(s) + "'");
}

void StrategyConfig::validate() const {
    const auto check_threshold = [](double v, const char* name) {
        if (!(v > 0.0) || v > 1.0) throw ConfigError(std::string(name) + " must lie in (0, 1]");
    };
    switch (kind) {
        case StrategyKind::Vanilla:
            if (top_k < 1) throw ConfigError("top_k must be >= 1");
            break;
        case StrategyKind::Threshold:
            check_threshold(tau, "tau");
            break;
        case StrategyKind::R2:
            check_threshold(tau_base, "tau_base");
            check_threshold(tau_s, "tau_s");
            check_threshold(tau_t, "tau_t");
            if (m_consec < 1) throw ConfigError("m_consec must be >= 1");
            if (window < 2) throw ConfigError("window must be >= 2");
            break;
    }
}

StrategyConfig StrategyConfig::preset(std::string_view name) {
    StrategyConfig cfg;
    cfg.kind = StrategyKind::R2;
    // (tau_t, tau_s) per model/dataset pair.
    struct Row {
        std::string_view name;
        double tau_t, tau_s;
    };
    static constexpr Row rows[] = {
        {"llada-gsm8k", 0.70, 0.80},    {"llada-math", 0.70, 0.80},
        {"llada-humaneval", 0.85, 0.85}, {"llada-mbpp", 0.80, 0.80},
        {"dream-gsm8k", 0.80, 0.85},    {"dream-math", 0.80, 0.85},
        {"dream-humaneval", 0.85, 0.85}, {"dream-mbpp", 0.80, 0.85},
    };
    for (const auto& row : rows) {
        if (row.name == name) {
            cfg.tau_t = row.tau_t;
            cfg.tau_s = row.tau_s;
            return cfg;
        }
    }
    throw ConfigError("unknown strategy preset: '" + std::string(name) + "'");
}

std::vector<std::string> StrategyConfig::preset_names() {
    return {"llada-gsm8k", "llada-math", "llada-humaneval", "llada-mbpp",
            "dream-gsm8k", "dream-math", "dream-humaneval", "dream-mbpp"};
}

void PositionHistory::observe(const PredictionFrame& frame) {
    if (frame.step == last_observed_step_) return;
    last_observed_step_ = frame.step;
    for (const auto& e : frame.entries) {
        auto [it, inserted] = streaks_.try_emplace(e.position);
        Streak& s = it->second;
        if (inserted || s.token != e.token) {
            s.token = e.token;
            s.confidences.clear();
        }
        s.confidences.push_back(e.confidence);
    }
}

void PositionHistory::clear() {
    streaks_.clear();
    last_observed_step_ = -1;
}

const PositionHistory::Streak& PositionHistory::at(int position) const {
    const auto it = streaks_.find(position);
    if (it == streaks_.end())
        throw ContractError("no streak recorded for position " + std::to_string(position));
    return it->second;
}

int PositionHistory::streak_length(int position) const {
    const auto it = streaks_.find(position);
    return it == streaks_.end() ? 0 : it->second.length();
}

namespace {

FinalizeEvent fallback_top1(std::span<const FrameEntry> entries) {
    const FrameEntry* best = &entries.front();
    for (const auto& e : entries) {
        if (e.confidence > best->confidence) best = &e;  // ties keep the lowest position
    }
    return FinalizeEvent{best->position, best->token, best->confidence, FinalizeReason::Fallback};
}

// Greedy exactly-w window scan over maximal runs of consecutive positions.
ConfClusterResult conf_cluster_on(std::span<const FrameEntry> entries, double tau_s, int w) {
    ConfClusterResult result;
    const int n = static_cast<int>(entries.size());
    int run_begin = 0;
    while (run_begin < n) {
        int run_end = run_begin + 1;  // exclusive
        while (run_end < n && entries[run_end].position == entries[run_end - 1].position + 1) ++run_end;
        int i = run_begin;
        while (i + w <= run_end) {
            double sum = 0.0;
            for (int j = i; j < i + w; ++j) sum += entries[j].confidence;
            if (sum / w > tau_s) {
                for (int j = i; j < i + w; ++j) {
                    result.finalizations.push_back(FinalizeEvent{entries[j].position, entries[j].token,
                                                                 entries[j].confidence,
                                                                 FinalizeReason::ConfCluster});
                }
                ++result.windows;
                i += w;
            } else {
                ++i;
            }
        }
        run_begin = run_end;
    }
    return result;
}

TokenClusterResult token_cluster_on(std::span<const FrameEntry> entries, double tau_s, PositionRule rule,
                                    Rng* rng) {
    TokenClusterResult result;
    const int n = static_cast<int>(entries.size());
    int i = 0;
    while (i < n) {
        int j = i + 1;
        while (j < n && entries[j].position == entries[j - 1].position + 1 && entries[j].token == entries[i].token)
            ++j;
        const int len = j - i;
        if (len >= 2) {
            int chosen = i;
            switch (rule) {
                case PositionRule::Conf:
                    for (int k = i + 1; k < j; ++k) {
                        if (entries[k].confidence > entries[chosen].confidence) chosen = k;
                    }
                    break;
                case PositionRule::Mid:
                    chosen = i + (len - 1) / 2;  // floor middle
                    break;
                case PositionRule::Random:
                    if (rng == nullptr) throw ContractError("Random position rule requires an rng");
                    chosen = i + static_cast<int>(rng->uniform_int(0, len - 1));
                    break;
            }
            if (entries[chosen].confidence > tau_s) {
                result.finalizations.push_back(FinalizeEvent{entries[chosen].position, entries[chosen].token,
                                                             entries[chosen].confidence,
                                                             FinalizeReason::TokenCluster});
                ++result.clusters_triggered;
            }
        }
        i = j;
    }
    return result;
}

double streak_indicator(const PositionHistory::Streak& streak, TemporalRule rule) {
    const auto& confs = streak.confidences;
    switch (rule) {
        case TemporalRule::Last:
            return confs.back();
        case TemporalRule::Ave:
            return std::accumulate(confs.begin(), confs.end(), 0.0) / static_cast<double>(confs.size());
        case TemporalRule::Max:
            return *std::max_element(confs.begin(), confs.end());
    }
    throw ContractError("invalid TemporalRule");
}

std::vector<FinalizeEvent> temporal_on(std::span<const FrameEntry> entries, const PositionHistory& history,
                                       int m_consec, double tau_t, TemporalRule rule) {
    std::vector<FinalizeEvent> finals;
    for (const auto& e : entries) {
        if (!history.has(e.position)) continue;
        const auto& streak = history.at(e.position);
        if (streak.length() < m_consec) continue;
        if (streak.token != e.token)
            throw ContractError("streak token diverged from the current frame at position " +
                                std::to_string(e.position));
        if (streak_indicator(streak, rule) > tau_t)
            finals.push_back(FinalizeEvent{e.position, streak.token, e.confidence, FinalizeReason::Temporal});
    }
    return finals;
}

std::vector<FrameEntry> drop_finalized(std::span<const FrameEntry> entries,
                                       const std::vector<FinalizeEvent>& finals) {
    std::vector<FrameEntry> kept;
    kept.reserve(entries.size());
    for (const auto& e : entries) {
        bool taken = false;
        for (const auto& f : finals) {
            if (f.position == e.position) {
                taken = true;
                break;
            }
        }
        if (!taken) kept.push_back(e);
    }
    return kept;
}

void require_frame(const PredictionFrame& frame) {
    if (frame.entries.empty()) throw ContractError("strategy invoked on an empty frame");
}

}  // namespace

std::vector<FinalizeEvent> vanilla_topk(const PredictionFrame& frame, const SequenceState& /*state*/, int k) {
    require_frame(frame);
    if (k < 1) throw ConfigError("top_k must be >= 1");
    std::vector<int> order(frame.entries.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return frame.entries[a].confidence > frame.entries[b].confidence;  // stable: position ties keep order
    });
    const int take = std::min<int>(k, static_cast<int>(order.size()));
    std::vector<FinalizeEvent> finals;
    finals.reserve(take);
    for (int i = 0; i < take; ++i) {
        const auto& e = frame.entries[order[i]];
        finals.push_back(FinalizeEvent{e.position, e.token, e.confidence, FinalizeReason::TopK});
    }
    std::sort(finals.begin(), finals.end(),
              [](const FinalizeEvent& a, const FinalizeEvent& b) { return a.position < b.position; });
    return finals;
}

std::vector<FinalizeEvent> threshold_parallel(const PredictionFrame& frame, const SequenceState& /*state*/,
                                              double tau) {
    require_frame(frame);
    std::vector<FinalizeEvent> finals;
    for (const auto& e : frame.entries) {
        if (e.confidence > tau)
            finals.push_back(FinalizeEvent{e.position, e.token, e.confidence, FinalizeReason::Threshold});
    }
    if (finals.empty()) finals.push_back(fallback_top1(frame.entries));
    return finals;
}

ConfClusterResult confidence_cluster_aggregate(const PredictionFrame& frame, const SequenceState& /*state*/,
                                               double tau_s, int w) {
    require_frame(frame);
    if (w < 2) throw ConfigError("window must be >= 2");
    return conf_cluster_on(frame.entries, tau_s, w);
}

TokenClusterResult token_cluster_aggregate(const PredictionFrame& frame, const SequenceState& /*state*/,
                                           double tau_s, PositionRule rule, Rng* rng) {
    require_frame(frame);
    return token_cluster_on(frame.entries, tau_s, rule, rng);
}

std::vector<FinalizeEvent> temporal_consistency(const PositionHistory& history, const PredictionFrame& frame,
                                                int m_consec, double tau_t, TemporalRule rule) {
    require_frame(frame);
    if (m_consec < 1) throw ConfigError("m_consec must be >= 1");
    return temporal_on(frame.entries, history, m_consec, tau_t, rule);
}

StrategyStepResult r2_step(const PredictionFrame& frame, const SequenceState& /*state*/,
                           PositionHistory& history, const StrategyConfig& cfg, Rng& rng) {
    require_frame(frame);
    if (cfg.kind != StrategyKind::R2) throw ContractError("r2_step requires an R2 strategy config");
    history.observe(frame);

    StrategyStepResult result;
    auto& finals = result.finalizations;

    // Stage 1: base threshold.
    for (const auto& e : frame.entries) {
        if (e.confidence > cfg.tau_base)
            finals.push_back(FinalizeEvent{e.position, e.token, e.confidence, FinalizeReason::Threshold});
    }
    std::vector<FrameEntry> remaining = drop_finalized(frame.entries, finals);

    // Stage 2: confidence-cluster windows.
    if (cfg.conf_cluster_enabled && !remaining.empty()) {
        auto conf = conf_cluster_on(remaining, cfg.tau_s, cfg.window);
        result.events.conf_cluster_windows = conf.windows;
        remaining = drop_finalized(remaining, conf.finalizations);
        finals.insert(finals.end(), conf.finalizations.begin(), conf.finalizations.end());
    }

    // Stage 3: token clusters.
    if (cfg.token_cluster_enabled && !remaining.empty()) {
        auto tok = token_cluster_on(remaining, cfg.tau_s, cfg.position_rule,
                                    cfg.position_rule == PositionRule::Random ? &rng : nullptr);
        result.events.token_cluster_events = tok.clusters_triggered;
        remaining = drop_finalized(remaining, tok.finalizations);
        finals.insert(finals.end(), tok.finalizations.begin(), tok.finalizations.end());
    }

    // Stage 4: temporal consistency.
    if (cfg.temporal_enabled && !remaining.empty()) {
        auto temp = temporal_on(remaining, history, cfg.m_consec, cfg.tau_t, cfg.temporal_rule);
        result.events.temporal_events = static_cast<int>(temp.size());
        finals.insert(finals.end(), temp.begin(), temp.end());
    }

    // Stage 5: progress fallback.
    if (finals.empty()) finals.push_back(fallback_top1(frame.entries));
    return result;
}

StrategyStepResult strategy_step(const PredictionFrame& frame, const SequenceState& state,
                                 PositionHistory& history, const StrategyConfig& cfg, Rng& rng) {
    StrategyStepResult result;
    switch (cfg.kind) {
        case StrategyKind::Vanilla:
            result.finalizations = vanilla_topk(frame, state, cfg.top_k);
            break;
        case StrategyKind::Threshold:
            result.finalizations = threshold_parallel(frame, state, cfg.tau);
            break;
        case StrategyKind::R2:
            result = r2_step(frame, state, history, cfg, rng);
            break;
    }
    return result;
}

}  // namespace rrd
