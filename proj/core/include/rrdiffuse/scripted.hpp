#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>

#include "rrdiffuse/predictor.hpp"

namespace rrd {

/**
 * Deterministic replay fixture: (step, position) -> (token, confidence),
 * with a constant fill for anything the script does not cover. Replays are
 * independent of wall clock and call interleaving; sampling mode replays the
 * same values as greedy mode.
 *
 * File format: JSON Lines. Header
 *   {"v":1,"vocab":int,"fill":{"token":int,"conf":float}}
 * then one record per scripted cell:
 *   {"step":int,"pos":int,"token":int,"conf":float}
 */
struct ScriptedScenario {
    int vocab_size = 64;
    TokenId fill_token = 0;
    double fill_confidence = 0.0;
    std::map<std::pair<int, int>, FrameEntry> cells;  // keyed by (step, pos)

    void add(int step, int pos, TokenId token, double confidence);
    // Scripted value or the fill; every query resolves to exactly one value.
    FrameEntry lookup(int step, int pos) const;

    static ScriptedScenario load_jsonl(std::istream& in);
    static ScriptedScenario load_file(const std::string& path);
    void save_jsonl(std::ostream& out) const;
    void save_file(const std::string& path) const;
};

class ScriptedPredictor final : public Predictor {
public:
    explicit ScriptedPredictor(ScriptedScenario scenario) : scenario_(std::move(scenario)) {}

    const ScriptedScenario& scenario() const { return scenario_; }

    int vocab_size() const override { return scenario_.vocab_size; }
    PredictionFrame predict(const SequenceState& state, std::span<const int> positions,
                            double temperature) const override;
    PredictionFrame sample_candidate(const SequenceState& state, std::span<const int> positions,
                                     double temperature, double top_p, Rng& rng) const override;

private:
    ScriptedScenario scenario_;
};

}  // namespace rrd
