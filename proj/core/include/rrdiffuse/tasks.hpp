#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rrdiffuse/rng.hpp"
#include "rrdiffuse/types.hpp"

namespace rrd::tasks {

// Shared 64-token vocabulary for the synthetic task families.
// 0..25 letters a..z, 26..35 digits 0..9, then sentinels and operators.
inline constexpr int kVocabSize = 64;
inline constexpr TokenId kLetterBase = 0;
inline constexpr TokenId kDigitBase = 26;
inline constexpr TokenId kAnswerMark = 36;  // '=' sentinel before the answer
inline constexpr TokenId kOpReverse = 37;
inline constexpr TokenId kOpShift = 38;
inline constexpr TokenId kOpAddMod = 39;
inline constexpr TokenId kOpCopy = 40;
inline constexpr TokenId kEos = 62;
inline constexpr TokenId kMask = 63;

inline TokenId letter(int i) { return kLetterBase + i; }
inline TokenId digit(int d) { return kDigitBase + d; }

// Human-readable rendering of toy tokens (letters/digits as characters,
// operators as bracketed names), whitespace-joined. Used by the text metrics.
std::string detokenize(std::span<const TokenId> tokens);

struct TaskInstance {
    std::vector<TokenId> prompt;  // [op, operands..., '=']
    std::vector<TokenId> answer;  // expected tokens before the first EOS
};

/**
 * Verifiable toy problems: reversible string transforms (copy, reverse,
 * cyclic shift) and single-digit modular addition. Each instance's answer is
 * exact-match checkable after truncating the decoded response at the first
 * EOS token.
 */
struct TaskSpec {
    std::string family = "reverse";  // copy | reverse | shift | addmod
    int length = 6;                  // operand letters for the string families
    int alphabet = 8;                // letters drawn from a..(a+alphabet-1)

    void validate() const;  // throws ConfigError
};

bool is_known_family(std::string_view family);

// Draws `count` distinct instances (deduplicated by prompt) deterministically
// from (spec, seed).
std::vector<TaskInstance> make_corpus(const TaskSpec& spec, int count, std::uint64_t seed);

// True iff the response truncated at the first EOS equals the instance's
// answer exactly.
bool oracle_check(const TaskInstance& instance, std::span<const TokenId> response, TokenId eos_id);

// Expected full response: answer followed by EOS padding to gen_len. Throws
// ConfigError when the answer does not fit.
std::vector<TokenId> padded_answer(const TaskInstance& instance, int gen_len, TokenId eos_id);

}  // namespace rrd::tasks
