#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rrdiffuse/predictor.hpp"

namespace rrd {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ToyModelConfig {
    int vocab_size = 64;
    int dim = 64;
    int layers = 2;
    int heads = 2;
    int max_ctx = 64;
    int mlp_mult = 4;
    double init_std = 0.02;

    int head_dim() const { return dim / heads; }
    int mlp_dim() const { return dim * mlp_mult; }
    void validate() const;  // throws ConfigError
};

/**
 * Small bidirectional-attention transformer over prompt+response with learned
 * absolute positional embeddings; the mask token is an ordinary vocabulary
 * entry with its own learned embedding. Pre-LN blocks, GELU MLP, untied
 * output projection. Parameters live in one flat double buffer so training,
 * checkpointing and finite-difference probes all see the same storage.
 *
 * Inference is const and deterministic; training mutates parameters
 * exclusively (no concurrent inference during an update).
 */
class ToyDiffusionLM final : public Predictor {
public:
    struct TensorInfo {
        std::string name;
        int rows = 0;
        int cols = 0;  // 1 for vectors
        std::size_t offset = 0;
        std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    };

    // Per-sequence activation cache filled by the cached forward pass and
    // consumed by backward().
    struct Workspace {
        std::vector<TokenId> tokens;
        Eigen::MatrixXd embedded;
        struct Layer {
            Eigen::MatrixXd x0, h1, q, k, v, ctx, x1, h2, u, g;
            Eigen::VectorXd mean1, rstd1, mean2, rstd2;
            std::vector<Eigen::MatrixXd> attn;  // per head, T x T softmax rows
        };
        std::vector<Layer> layers;
        Eigen::MatrixXd xf, fnorm;
        Eigen::VectorXd meanf, rstdf;
    };

    ToyDiffusionLM(const ToyModelConfig& cfg, std::uint64_t init_seed);
    // All-zero parameters: uniform output distributions regardless of input.
    static ToyDiffusionLM zeros(const ToyModelConfig& cfg);

    const ToyModelConfig& config() const { return cfg_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<TensorInfo>& tensors() const { return tensors_; }

    // One logit row per input position, shape (T, V); finite values or
    // NumericError. Deterministic given parameters and input.
    Eigen::MatrixXd forward_logits(std::span<const TokenId> sequence) const;
    Eigen::MatrixXd forward_logits(std::span<const TokenId> sequence, Workspace& ws) const;

    // Accumulates d(loss)/d(params) into `grads` (size param_count) given
    // d(loss)/d(logits) for the cached forward pass.
    void backward(const Workspace& ws, const Eigen::MatrixXd& dlogits, std::vector<double>& grads) const;

    // Predictor interface ------------------------------------------------
    int vocab_size() const override { return cfg_.vocab_size; }
    PredictionFrame predict(const SequenceState& state, std::span<const int> positions,
                            double temperature) const override;
    PredictionFrame sample_candidate(const SequenceState& state, std::span<const int> positions,
                                     double temperature, double top_p, Rng& rng) const override;

    // When set, predict() attaches full distributions to its frames.
    void set_record_distributions(bool on) { record_distributions_ = on; }

    // Checkpoints: flat little-endian float32 at `path` plus a `path`.json
    // sidecar with tensor names/shapes/offsets (in elements).
    void save_checkpoint(const std::string& path) const;
    static ToyDiffusionLM load_checkpoint(const std::string& path);

private:
    explicit ToyDiffusionLM(const ToyModelConfig& cfg);
    void register_tensors();
    std::size_t tensor_offset(const std::string& name) const;

    Eigen::Map<const RowMatrixXd> mat(const std::string& name) const;
    Eigen::Map<const Eigen::VectorXd> vec(const std::string& name) const;

    ToyModelConfig cfg_;
    std::vector<double> params_;
    std::vector<TensorInfo> tensors_;
    bool record_distributions_ = false;
};

}  // namespace rrd
