#include "rrdiffuse/types.hpp"

#include <string>

#include "rrdiffuse/errors.hpp"

namespace rrd {

std::string_view to_string(FinalizeReason reason) {
    switch (reason) {
        case FinalizeReason::TopK: return "TopK";
        case FinalizeReason::Threshold: return "Threshold";
        case FinalizeReason::ConfCluster: return "ConfCluster";
        case FinalizeReason::TokenCluster: return "TokenCluster";
        case FinalizeReason::Temporal: return "Temporal";
        case FinalizeReason::Fallback: return "Fallback";
    }
    throw ContractError("to_string: invalid FinalizeReason value");
}

FinalizeReason reason_from_string(std::string_view s) {
    if (s == "TopK") return FinalizeReason::TopK;
    if (s == "Threshold") return FinalizeReason::Threshold;
    if (s == "ConfCluster") return FinalizeReason::ConfCluster;
    if (s == "TokenCluster") return FinalizeReason::TokenCluster;
    if (s == "Temporal") return FinalizeReason::Temporal;
    if (s == "Fallback") return FinalizeReason::Fallback;
    throw FormatError("unknown finalize reason tag: '" + std::string(s) + "'");
}

void DecodeConfig::validate() const {
    if (gen_len <= 0) throw ConfigError("gen_len must be positive");
    if (block_size < 1) throw ConfigError("block_size must be >= 1");
    if (gen_len % block_size != 0)
        throw ConfigError("gen_len (" + std::to_string(gen_len) + ") must be a multiple of block_size (" +
                          std::to_string(block_size) + ")");
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (mask_id < 0 || mask_id >= vocab_size) throw ConfigError("mask_id outside vocabulary");
    if (eos_id < 0 || eos_id >= vocab_size) throw ConfigError("eos_id outside vocabulary");
    if (mask_id == eos_id) throw ConfigError("mask_id and eos_id must differ");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("top_p must lie in (0, 1]");
}

}  // namespace rrd
