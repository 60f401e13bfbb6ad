#pragma once

#include <vector>

#include "rrdiffuse/types.hpp"

namespace rrd {

/**
 * Per-position decode state for one generation job.
 *
 * The response starts fully masked and is finalized monotonically: once a slot
 * holds a token it never changes. Blocks are decoded strictly left to right;
 * the cursor names the lowest block that still contains a masked slot, so
 * every block below it is fully finalized and every block above it is fully
 * masked. A slot is masked iff it still holds mask_id (finalize rejects the
 * mask token, so the encoding is unambiguous).
 *
 * Single-owner: one decode run mutates one state; distinct runs are
 * independent and may execute in parallel.
 */
class SequenceState {
public:
    // Fresh all-masked state. Throws ConfigError on invalid cfg and
    // ContractError on an empty or invalid prompt.
    SequenceState(std::vector<TokenId> prompt, const DecodeConfig& cfg);

    const std::vector<TokenId>& prompt() const { return prompt_; }
    const DecodeConfig& config() const { return cfg_; }

    int gen_len() const { return cfg_.gen_len; }
    int block_size() const { return cfg_.block_size; }
    int block_cursor() const { return block_cursor_; }
    int step_counter() const { return step_counter_; }
    bool complete() const { return block_cursor_ == cfg_.num_blocks(); }

    bool is_masked(int position) const;
    TokenId response_token(int position) const;
    // Response slots; masked slots hold mask_id.
    const std::vector<TokenId>& response() const { return response_; }
    // prompt ++ response with mask_id in masked slots (model input layout).
    std::vector<TokenId> full_sequence() const;

    // Ascending masked positions inside the block at the cursor; empty iff
    // decoding is complete.
    std::vector<int> active_masked_positions() const;

    // Commits `token` at `position` and advances the cursor past any block
    // this completes. Throws ContractError on re-finalization, writes outside
    // the active block, or the mask token.
    FinalizeEvent finalize(int position, TokenId token, double confidence, FinalizeReason reason);

    // Counts one consumed prediction frame (one NFE).
    void note_step_consumed() { ++step_counter_; }

private:
    DecodeConfig cfg_;
    std::vector<TokenId> prompt_;
    std::vector<TokenId> response_;
    int block_cursor_ = 0;
    int step_counter_ = 0;
    int masked_in_active_block_ = 0;
};

}  // namespace rrd
