#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rrdiffuse/decode.hpp"
#include "rrdiffuse/toy_model.hpp"

namespace rrd {

// One supervised pair selected by the redundancy-aware collection pass. The
// response is EOS-padded to gen_len; only oracle-correct responses are ever
// admitted.
struct SftExample {
    std::vector<TokenId> prompt;
    std::vector<TokenId> response;
    long r_total = 0;
    bool correct = true;
};

// Binary mask over one response block plus the masking probability that drew
// it. m and its complement partition the block: every token is masked in
// exactly one of the two views. Draws that mask none or all of the block are
// resampled, so both views are nonempty.
struct MaskPair {
    int block_index = 0;
    std::vector<std::uint8_t> mask;  // length block_size; 1 = masked in the m-view
    double p_m = 0.5;

    std::vector<std::uint8_t> complement() const;
};

// One training view: prompt and blocks < i visible, blocks > i fully masked,
// block i masked per the (possibly complemented) mask. mask_prob is the
// view's own masking probability (p_m for m, 1-p_m for the complement) and
// normalizes the loss.
struct SftView {
    std::vector<TokenId> x_view;
    std::vector<int> masked_rows;     // absolute row indices into x_view
    std::vector<TokenId> targets;     // parallel to masked_rows
    double mask_prob = 0.5;
    int block_index = 0;
    int block_size = 0;
};

// Throws ConfigError unless 0 < p_m < 1.
MaskPair sample_mask_pair(int block_size, double p_m, Rng& rng);

SftView build_view(const SftExample& example, const DecodeConfig& cfg, const MaskPair& pair,
                   bool complement_view);

struct SemiArView {
    SftView view;  // the m-view
    MaskPair pair;
    int block_index = 0;
};

// Uniform random block index plus a fresh mask draw.
SemiArView sample_semi_ar_view(const SftExample& example, const DecodeConfig& cfg, double p_m, Rng& rng);

// Eq-style block loss for one view:
//   -(1/(s * mask_prob)) * sum over masked j of log p(target_j | visible)
// Probabilities below `log_prob_floor` are clamped (with a numeric warning)
// and contribute no gradient.
double sft_loss(const ToyDiffusionLM& model, const SftView& view, double log_prob_floor = 1e-9);

// Same value; additionally accumulates coeff * d(loss)/d(params) into grads.
double sft_loss_grad(const ToyDiffusionLM& model, const SftView& view, std::vector<double>& grads,
                     double coeff, double log_prob_floor = 1e-9);

// Average of the m and complement views for one example (the two views share
// one optimizer step).
double sft_pair_loss(const ToyDiffusionLM& model, const SftExample& example, const DecodeConfig& cfg,
                     const MaskPair& pair, double log_prob_floor = 1e-9);
double sft_pair_loss_grad(const ToyDiffusionLM& model, const SftExample& example, const DecodeConfig& cfg,
                          const MaskPair& pair, std::vector<double>& grads, double coeff,
                          double log_prob_floor = 1e-9);

// Denoising objective: response tokens masked independently with probability
// t (prompt fixed), loss -(1/t) * sum over masked of log p(original | x_t).
// Throws NumericError unless 0 < t <= 1.
double pretrain_loss(const ToyDiffusionLM& model, std::span<const TokenId> prompt,
                     std::span<const TokenId> response, double t, Rng& rng, double log_prob_floor = 1e-9);
double pretrain_loss_grad(const ToyDiffusionLM& model, std::span<const TokenId> prompt,
                          std::span<const TokenId> response, double t, Rng& rng, std::vector<double>& grads,
                          double coeff, double log_prob_floor = 1e-9);

// Dataset collection ----------------------------------------------------

enum class SelectionRule { Min, Max };

struct CollectOptions {
    int k_cand = 4;
    double temperature = 0.7;
    double top_p = 1.0;
    SelectionRule rule = SelectionRule::Min;
    std::uint64_t seed = 0;
    int jobs = 1;
};

// Decides correctness of a full decoded response for the prompt at `index`.
using Oracle = std::function<bool(std::size_t index, std::span<const TokenId> response)>;

// For each prompt: k_cand sampled decodes, each scored by score_trace;
// incorrect candidates are dropped and the correct one with minimal (or, for
// the Max ablation, maximal) R_total is kept, ties toward the first
// generated. Prompts with no correct candidate emit nothing; oracle failures
// skip the prompt with a warning. Parallel across prompts; output order
// follows prompt order regardless of jobs.
std::vector<SftExample> collect_dataset(std::span<const std::vector<TokenId>> prompts,
                                        const Predictor& predictor, const DecodeConfig& cfg,
                                        const StrategyConfig& strategy, const CollectOptions& options,
                                        const Oracle& oracle);

// Training ---------------------------------------------------------------

struct TrainConfig {
    double lr = 2e-5;
    int batch_size = 64;
    int epochs = 1;
    double p_m_min = 0.1;  // per-example p_m ~ Uniform(p_m_min, p_m_max)
    double p_m_max = 0.9;
    int k_cand = 4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int eval_interval = 50;  // optimizer steps between eval-hook rows
    int grad_accum = 1;
    double log_prob_floor = 1e-9;

    void validate() const;  // throws ConfigError
};

struct EvalStats {
    double r_total_mean = 0.0;
    double nfe_mean = 0.0;
    double accuracy = 0.0;
};

using EvalHook = std::function<EvalStats(const ToyDiffusionLM& model)>;

struct DynamicsRow {
    long iter = 0;
    double loss = 0.0;
    double r_total_mean = 0.0;
    double nfe_mean = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    std::vector<DynamicsRow> dynamics;
    long steps = 0;
    bool aborted_nonfinite = false;
};

// Adam over shuffled minibatches of the complementary-pair loss. The eval
// hook (may be empty) runs on the parameter snapshot at iter 0, every
// eval_interval steps, and after the last step. A non-finite batch aborts
// before the update, leaving the last good parameters in place. Zero
// steps leave the parameters bitwise unchanged.
TrainResult train(ToyDiffusionLM& model, std::span<const SftExample> dataset, const DecodeConfig& cfg,
                  const TrainConfig& tc, const EvalHook& eval_hook);

// Same loop over the denoising objective with t ~ Uniform(0, 1] per example;
// used to create the initial checkpoint the SFT phase starts from.
TrainResult pretrain(ToyDiffusionLM& model, std::span<const SftExample> dataset, const DecodeConfig& cfg,
                     const TrainConfig& tc, const EvalHook& eval_hook);

// Serialization -----------------------------------------------------------

// JSON Lines, one {"prompt":[...],"response":[...],"r_total":int} per row.
void write_dataset_jsonl(std::span<const SftExample> dataset, std::ostream& out);
std::vector<SftExample> read_dataset_jsonl(std::istream& in);
void write_dataset_file(std::span<const SftExample> dataset, const std::string& path);
std::vector<SftExample> read_dataset_file(const std::string& path);

// CSV: iter,loss,r_total_mean,nfe_mean,accuracy.
std::string dynamics_csv(std::span<const DynamicsRow> rows);

}  // namespace rrd
