#include "rrdiffuse/sequence_state.hpp"

#include <string>
#include <utility>

#include "rrdiffuse/errors.hpp"

namespace rrd {

SequenceState::SequenceState(std::vector<TokenId> prompt, const DecodeConfig& cfg)
    : cfg_(cfg), prompt_(std::move(prompt)) {
    cfg_.validate();
    if (prompt_.empty()) throw ContractError("prompt must be nonempty");
    for (const TokenId t : prompt_) {
        if (t < 0 || t >= cfg_.vocab_size)
            throw ContractError("prompt token " + std::to_string(t) + " outside vocabulary");
        if (t == cfg_.mask_id) throw ContractError("prompt must not contain the mask token");
    }
    response_.assign(static_cast<std::size_t>(cfg_.gen_len), cfg_.mask_id);
    masked_in_active_block_ = cfg_.block_size;
}

bool SequenceState::is_masked(int position) const {
    if (position < 0 || position >= cfg_.gen_len)
        throw ContractError("position " + std::to_string(position) + " outside response");
    return response_[static_cast<std::size_t>(position)] == cfg_.mask_id;
}

TokenId SequenceState::response_token(int position) const {
    if (is_masked(position)) throw ContractError("position " + std::to_string(position) + " still masked");
    return response_[static_cast<std::size_t>(position)];
}

std::vector<TokenId> SequenceState::full_sequence() const {
    std::vector<TokenId> seq;
    seq.reserve(prompt_.size() + response_.size());
    seq.insert(seq.end(), prompt_.begin(), prompt_.end());
    seq.insert(seq.end(), response_.begin(), response_.end());
    return seq;
}

std::vector<int> SequenceState::active_masked_positions() const {
    std::vector<int> positions;
    if (complete()) return positions;
    const int begin = block_cursor_ * cfg_.block_size;
    const int end = begin + cfg_.block_size;
    for (int pos = begin; pos < end; ++pos) {
        if (response_[static_cast<std::size_t>(pos)] == cfg_.mask_id) positions.push_back(pos);
    }
    return positions;
}

FinalizeEvent SequenceState::finalize(int position, TokenId token, double confidence, FinalizeReason reason) {
    if (complete()) throw ContractError("finalize on a completed state");
    if (position < 0 || position >= cfg_.gen_len)
        throw ContractError("finalize position " + std::to_string(position) + " outside response");
    const int block = position / cfg_.block_size;
    if (block != block_cursor_)
        throw ContractError("finalize position " + std::to_string(position) + " lies in block " +
                            std::to_string(block) + " but the active block is " + std::to_string(block_cursor_));
    if (response_[static_cast<std::size_t>(position)] != cfg_.mask_id)
        throw ContractError("position " + std::to_string(position) + " already finalized");
    if (token == cfg_.mask_id) throw ContractError("cannot finalize the mask token");
    if (token < 0 || token >= cfg_.vocab_size)
        throw ContractError("finalize token " + std::to_string(token) + " outside vocabulary");

    response_[static_cast<std::size_t>(position)] = token;
    --masked_in_active_block_;
    while (masked_in_active_block_ == 0) {
        ++block_cursor_;
        if (block_cursor_ == cfg_.num_blocks()) break;
        masked_in_active_block_ = 0;
        const int begin = block_cursor_ * cfg_.block_size;
        for (int pos = begin; pos < begin + cfg_.block_size; ++pos) {
            if (response_[static_cast<std::size_t>(pos)] == cfg_.mask_id) ++masked_in_active_block_;
        }
    }
    return FinalizeEvent{position, token, confidence, reason};
}

}  // namespace rrd
