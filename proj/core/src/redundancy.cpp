#include "rrdiffuse/redundancy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "rrdiffuse/errors.hpp"
#include "rrdiffuse/tasks.hpp"

namespace rrd {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

RedundancyReport score_trace(const DecodeTrace& trace) {
    RedundancyReport report;
    report.kind = CountsKind::Actual;
    const int w = trace.strategy_config.window;
    for (const auto& record : trace.steps) {
        int conf_finals = 0;
        for (const auto& f : record.finalizations) {
            ++report.breakdown[f.reason];
            switch (f.reason) {
                case FinalizeReason::ConfCluster: ++conf_finals; break;
                case FinalizeReason::TokenCluster: ++report.r_s; break;
                case FinalizeReason::Temporal: ++report.r_t; break;
                default: break;
            }
        }
        if (conf_finals != 0) {
            if (w < 2 || conf_finals % w != 0)
                throw FormatError("step " + std::to_string(record.step) + " has " +
                                  std::to_string(conf_finals) +
                                  " ConfCluster finalizations, not a multiple of window " + std::to_string(w));
            report.r_s += conf_finals / w;
        }
    }
    report.r_total = report.r_s + report.r_t;
    return report;
}

namespace {

struct ReplayStreak {
    TokenId token = 0;
    std::vector<double> confidences;
    bool counted = false;  // already credited one would-be trigger this streak
    int length() const { return static_cast<int>(confidences.size()); }
};

double replay_indicator(const ReplayStreak& s, TemporalRule rule) {
    switch (rule) {
        case TemporalRule::Last:
            return s.confidences.back();
        case TemporalRule::Ave:
            return std::accumulate(s.confidences.begin(), s.confidences.end(), 0.0) /
                   static_cast<double>(s.confidences.size());
        case TemporalRule::Max:
            return *std::max_element(s.confidences.begin(), s.confidences.end());
    }
    throw ContractError("invalid TemporalRule");
}

}  // namespace

RedundancyReport potential_triggers(const DecodeTrace& trace, const StrategyConfig& thresholds) {
    thresholds.validate();
    RedundancyReport report;
    report.kind = CountsKind::Potential;
    long conf_windows = 0, token_clusters = 0, temporal = 0;
    std::map<int, ReplayStreak> streaks;

    for (const auto& record : trace.steps) {
        const auto& entries = record.frame.entries;
        if (entries.empty())
            throw MetricError("trace lacks prediction frames at step " + std::to_string(record.step) +
                              "; potential counting needs a full-level trace");

        // Confidence windows: greedy exactly-w scan over the frame's runs.
        {
            const int n = static_cast<int>(entries.size());
            const int w = thresholds.window;
            int run_begin = 0;
            while (run_begin < n) {
                int run_end = run_begin + 1;
                while (run_end < n && entries[run_end].position == entries[run_end - 1].position + 1) ++run_end;
                int i = run_begin;
                while (i + w <= run_end) {
                    double sum = 0.0;
                    for (int j = i; j < i + w; ++j) sum += entries[j].confidence;
                    if (sum / w > thresholds.tau_s) {
                        ++conf_windows;
                        i += w;
                    } else {
                        ++i;
                    }
                }
                run_begin = run_end;
            }
        }

        // Token clusters: maximal same-token runs of length >= 2.
        {
            const int n = static_cast<int>(entries.size());
            int i = 0;
            while (i < n) {
                int j = i + 1;
                while (j < n && entries[j].position == entries[j - 1].position + 1 &&
                       entries[j].token == entries[i].token)
                    ++j;
                const int len = j - i;
                if (len >= 2) {
                    int chosen = i;
                    if (thresholds.position_rule == PositionRule::Mid) {
                        chosen = i + (len - 1) / 2;
                    } else {  // Conf, and Random evaluated as Conf in replays
                        for (int k = i + 1; k < j; ++k) {
                            if (entries[k].confidence > entries[chosen].confidence) chosen = k;
                        }
                    }
                    if (entries[chosen].confidence > thresholds.tau_s) ++token_clusters;
                }
                i = j;
            }
        }

        // Temporal: streaks over the recorded frames, one would-be trigger
        // per streak at its first qualifying step.
        for (const auto& e : entries) {
            auto [it, inserted] = streaks.try_emplace(e.position);
            ReplayStreak& s = it->second;
            if (inserted || s.token != e.token) {
                s.token = e.token;
                s.confidences.clear();
                s.counted = false;
            }
            s.confidences.push_back(e.confidence);
            if (!s.counted && s.length() >= thresholds.m_consec &&
                replay_indicator(s, thresholds.temporal_rule) > thresholds.tau_t) {
                ++temporal;
                s.counted = true;
            }
        }
    }

    report.breakdown[FinalizeReason::ConfCluster] = conf_windows;
    report.breakdown[FinalizeReason::TokenCluster] = token_clusters;
    report.breakdown[FinalizeReason::Temporal] = temporal;
    report.r_s = conf_windows + token_clusters;
    report.r_t = temporal;
    report.r_total = report.r_s + report.r_t;
    return report;
}

double repeated_bigram_rate(std::span<const TokenId> tokens) {
    if (tokens.size() < 2) throw MetricError("repeated_bigram_rate needs at least 2 tokens");
    std::set<std::pair<TokenId, TokenId>> distinct;
    const std::size_t total = tokens.size() - 1;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) distinct.emplace(tokens[i], tokens[i + 1]);
    return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double lexical_diversity(std::span<const TokenId> tokens) {
    if (tokens.empty()) throw MetricError("lexical_diversity needs a nonempty token list");
    std::set<TokenId> unique(tokens.begin(), tokens.end());
    return static_cast<double>(unique.size()) / static_cast<double>(tokens.size());
}

namespace {

bool matches_at(std::string_view text, std::size_t at, std::string_view marker) {
    if (at + marker.size() > text.size()) return false;
    for (std::size_t i = 0; i < marker.size(); ++i) {
        const char a = static_cast<char>(std::tolower(static_cast<unsigned char>(text[at + i])));
        const char b = static_cast<char>(std::tolower(static_cast<unsigned char>(marker[i])));
        if (a != b) return false;
    }
    return true;
}

}  // namespace

int template_marker_count(std::string_view text, std::span<const std::string> markers) {
    if (markers.empty()) throw ConfigError("template_marker_count needs a nonempty marker list");
    int count = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const auto& marker : markers) {
            if (!marker.empty() && matches_at(text, i, marker)) {
                ++count;
                i += marker.size();
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return count;
}

const std::vector<std::string>& default_template_markers() {
    static const std::vector<std::string> markers = {
        "Let's break down the problem step by",
        "To solve this problem, we need to determine",
        "To solve this problem, we need to calculate",
    };
    return markers;
}

TraceAnalysisRow analyze_trace(const std::string& trace_id, const DecodeTrace& trace,
                               std::span<const std::string> markers) {
    TraceAnalysisRow row;
    row.trace_id = trace_id;
    row.nfe = trace.nfe();
    const RedundancyReport report = score_trace(trace);
    row.r_s = report.r_s;
    row.r_t = report.r_t;
    row.r_total = report.r_total;
    const std::vector<TokenId> response = trace.truncated_response();
    if (response.size() >= 2) {
        row.bigram_rate = repeated_bigram_rate(response);
        row.bigram_defined = true;
    }
    if (!response.empty()) {
        row.lex_div = lexical_diversity(response);
        row.lex_div_defined = true;
    }
    row.template_count = template_marker_count(tasks::detokenize(response), markers);
    return row;
}

std::string analysis_csv(std::span<const TraceAnalysisRow> rows) {
    std::ostringstream out;
    out << "trace_id,nfe,R_s,R_t,R_total,bigram_rate,lex_div,template_count\n";
    for (const auto& r : rows) {
        out << r.trace_id << ',' << r.nfe << ',' << r.r_s << ',' << r.r_t << ',' << r.r_total << ',';
        if (r.bigram_defined) out << fmt_double(r.bigram_rate);
        out << ',';
        if (r.lex_div_defined) out << fmt_double(r.lex_div);
        out << ',' << r.template_count << '\n';
    }
    return out.str();
}

}  // namespace rrd
