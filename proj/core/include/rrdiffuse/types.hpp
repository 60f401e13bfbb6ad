#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rrd {

// Index into the model vocabulary. Valid ids are 0 <= id < vocab_size; the
// MASK and EOS ids are distinguished members of the vocabulary and must differ.
using TokenId = std::int32_t;

// Which rule committed a token. Every finalization carries exactly one reason.
enum class FinalizeReason {
    TopK,          // vanilla top-k confidence decoding
    Threshold,     // confidence above the base threshold
    ConfCluster,   // confidence-cluster window aggregation
    TokenCluster,  // token-cluster positional aggregation
    Temporal,      // multi-step consistency check
    Fallback,      // forced top-1 to guarantee progress
};

std::string_view to_string(FinalizeReason reason);
// Throws FormatError on an unknown tag.
FinalizeReason reason_from_string(std::string_view s);

struct FinalizeEvent {
    int position = 0;  // response-relative index
    TokenId token = 0;
    double confidence = 0.0;
    FinalizeReason reason = FinalizeReason::TopK;

    bool operator==(const FinalizeEvent&) const = default;
};

// Decode-run shape and determinism parameters. gen_len must be a positive
// multiple of block_size; MASK/EOS live inside the vocabulary and differ.
struct DecodeConfig {
    int gen_len = 256;
    int block_size = 32;
    int vocab_size = 64;
    TokenId mask_id = 63;
    TokenId eos_id = 62;
    std::uint64_t seed = 0;
    double temperature = 1.0;  // softmax scaling for predict/sample
    double top_p = 1.0;        // nucleus truncation for sampling; 1.0 = off

    int num_blocks() const { return gen_len / block_size; }
    // Throws ConfigError when any invariant fails.
    void validate() const;
};

}  // namespace rrd
