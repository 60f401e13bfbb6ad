#include "rrdiffuse/decode.hpp"

#include <utility>

#include "rrdiffuse/errors.hpp"

namespace rrd {

DecodeTrace run_decode(SequenceState state, const Predictor& predictor, const StrategyConfig& strategy,
                       DecodeMode mode) {
    strategy.validate();
    const DecodeConfig& cfg = state.config();
    if (predictor.vocab_size() != cfg.vocab_size)
        throw ContractError("predictor vocabulary (" + std::to_string(predictor.vocab_size()) +
                            ") does not match config (" + std::to_string(cfg.vocab_size) + ")");

    DecodeTrace trace;
    trace.decode_config = cfg;
    trace.strategy_config = strategy;
    trace.prompt = state.prompt();

    Rng rng(Rng::derive(cfg.seed, 0xdec0deULL));
    PositionHistory history;

    while (!state.complete()) {
        const std::vector<int> positions = state.active_masked_positions();
        const int block = state.block_cursor();

        PredictionFrame frame =
            mode == DecodeMode::Sample
                ? predictor.sample_candidate(state, positions, cfg.temperature, cfg.top_p, rng)
                : predictor.predict(state, positions, cfg.temperature);
        frame.step = state.step_counter();
        frame.validate_against(positions, cfg.vocab_size);
        state.note_step_consumed();

        StrategyStepResult step = strategy_step(frame, state, history, strategy, rng);
        if (step.finalizations.empty())
            throw ContractError("strategy finalized nothing at step " + std::to_string(frame.step) +
                                " (progress violation)");

        for (const auto& f : step.finalizations) {
            state.finalize(f.position, f.token, f.confidence, f.reason);
            history.erase_position(f.position);
        }
        if (state.block_cursor() != block) history.clear();  // streaks do not cross blocks

        StepRecord record;
        record.step = frame.step;
        record.block = block;
        record.frame = std::move(frame);
        record.finalizations = std::move(step.finalizations);
        trace.steps.push_back(std::move(record));
    }

    trace.final_response = state.response();
    trace.validate();
    return trace;
}

}  // namespace rrd
