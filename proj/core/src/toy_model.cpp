#include "rrdiffuse/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "rrdiffuse/errors.hpp"

namespace rrd {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Eigen::VectorXd softmax_scaled(const Eigen::RowVectorXd& logits, double temperature) {
    Eigen::VectorXd z = logits.transpose() / temperature;
    const double zmax = z.maxCoeff();
    z = (z.array() - zmax).exp();
    return z / z.sum();
}

}  // namespace

void ToyModelConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("toy model vocab_size must be >= 2");
    if (dim < 1 || layers < 1 || heads < 1 || max_ctx < 1 || mlp_mult < 1)
        throw ConfigError("toy model dimensions must be positive");
    if (dim % heads != 0) throw ConfigError("toy model dim must be divisible by heads");
    if (init_std < 0.0) throw ConfigError("init_std must be nonnegative");
}

ToyDiffusionLM::ToyDiffusionLM(const ToyModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    register_tensors();
    std::size_t total = 0;
    for (const auto& t : tensors_) total += t.size();
    params_.assign(total, 0.0);
}

ToyDiffusionLM::ToyDiffusionLM(const ToyModelConfig& cfg, std::uint64_t init_seed) : ToyDiffusionLM(cfg) {
    Rng rng(Rng::derive(init_seed, 0x70e1ULL));
    for (const auto& t : tensors_) {
        const bool is_ln_gain = t.name.size() >= 2 && t.name.compare(t.name.size() - 2, 2, ".g") == 0 &&
                                t.name.find("ln") != std::string::npos;
        const bool is_bias = t.name.size() >= 2 && (t.name.compare(t.name.size() - 2, 2, ".b") == 0);
        double* p = params_.data() + t.offset;
        if (is_ln_gain) {
            std::fill(p, p + t.size(), 1.0);
        } else if (is_bias) {
            std::fill(p, p + t.size(), 0.0);
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.normal(0.0, cfg_.init_std);
        }
    }
}

ToyDiffusionLM ToyDiffusionLM::zeros(const ToyModelConfig& cfg) { return ToyDiffusionLM(cfg); }

void ToyDiffusionLM::register_tensors() {
    const int d = cfg_.dim;
    const int md = cfg_.mlp_dim();
    std::size_t offset = 0;
    const auto add = [&](const std::string& name, int rows, int cols) {
        tensors_.push_back(TensorInfo{name, rows, cols, offset});
        offset += static_cast<std::size_t>(rows) * cols;
    };
    add("tok_emb", cfg_.vocab_size, d);
    add("pos_emb", cfg_.max_ctx, d);
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "l" + std::to_string(l) + ".";
        add(p + "ln1.g", d, 1);
        add(p + "ln1.b", d, 1);
        add(p + "attn.wq", d, d);
        add(p + "attn.bq", d, 1);
        add(p + "attn.wk", d, d);
        add(p + "attn.bk", d, 1);
        add(p + "attn.wv", d, d);
        add(p + "attn.bv", d, 1);
        add(p + "attn.wo", d, d);
        add(p + "attn.bo", d, 1);
        add(p + "ln2.g", d, 1);
        add(p + "ln2.b", d, 1);
        add(p + "mlp.w1", d, md);
        add(p + "mlp.b1", md, 1);
        add(p + "mlp.w2", md, d);
        add(p + "mlp.b2", d, 1);
    }
    add("lnf.g", d, 1);
    add("lnf.b", d, 1);
    add("out.w", d, cfg_.vocab_size);
    add("out.b", cfg_.vocab_size, 1);
}

std::size_t ToyDiffusionLM::tensor_offset(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return t.offset;
    }
    throw ContractError("unknown tensor: " + name);
}

Eigen::Map<const RowMatrixXd> ToyDiffusionLM::mat(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return {params_.data() + t.offset, t.rows, t.cols};
    }
    throw ContractError("unknown tensor: " + name);
}

Eigen::Map<const Eigen::VectorXd> ToyDiffusionLM::vec(const std::string& name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return {params_.data() + t.offset, t.rows};
    }
    throw ContractError("unknown tensor: " + name);
}

namespace {

// y = g .* (x - mu) * rstd + b, cached per row.
void layernorm_forward(const Eigen::MatrixXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& b,
                       Eigen::MatrixXd& y, Eigen::VectorXd& mean, Eigen::VectorXd& rstd) {
    const int T = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    y.resize(T, d);
    mean.resize(T);
    rstd.resize(T);
    for (int t = 0; t < T; ++t) {
        const double mu = x.row(t).mean();
        const double var = (x.row(t).array() - mu).square().mean();
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        mean(t) = mu;
        rstd(t) = rs;
        y.row(t) = (((x.row(t).array() - mu) * rs) * g.transpose().array()) + b.transpose().array();
    }
}

// Returns dx; accumulates dg/db.
Eigen::MatrixXd layernorm_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& rstd, const Eigen::VectorXd& g,
                                   const Eigen::MatrixXd& dy, Eigen::Map<Eigen::VectorXd> dg,
                                   Eigen::Map<Eigen::VectorXd> db) {
    const int T = static_cast<int>(x.rows());
    const int d = static_cast<int>(x.cols());
    Eigen::MatrixXd dx(T, d);
    for (int t = 0; t < T; ++t) {
        const Eigen::ArrayXd xhat = (x.row(t).transpose().array() - mean(t)) * rstd(t);
        const Eigen::ArrayXd dyr = dy.row(t).transpose().array();
        dg.array() += dyr * xhat;
        db.array() += dyr;
        const Eigen::ArrayXd dxhat = dyr * g.array();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xhat).mean();
        dx.row(t) = (rstd(t) * (dxhat - m1 - xhat * m2)).matrix().transpose();
    }
    return dx;
}

}  // namespace

Eigen::MatrixXd ToyDiffusionLM::forward_logits(std::span<const TokenId> sequence) const {
    Workspace ws;
    return forward_logits(sequence, ws);
}

Eigen::MatrixXd ToyDiffusionLM::forward_logits(std::span<const TokenId> sequence, Workspace& ws) const {
    const int T = static_cast<int>(sequence.size());
    if (T == 0) throw ContractError("forward_logits: empty sequence");
    if (T > cfg_.max_ctx)
        throw ContractError("sequence length " + std::to_string(T) + " exceeds max context " +
                            std::to_string(cfg_.max_ctx));
    const int d = cfg_.dim;
    const int hd = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    ws.tokens.assign(sequence.begin(), sequence.end());
    const auto tok_emb = mat("tok_emb");
    const auto pos_emb = mat("pos_emb");
    Eigen::MatrixXd x(T, d);
    for (int t = 0; t < T; ++t) {
        const TokenId tok = sequence[t];
        if (tok < 0 || tok >= cfg_.vocab_size)
            throw ContractError("token " + std::to_string(tok) + " outside vocabulary");
        x.row(t) = tok_emb.row(tok) + pos_emb.row(t);
    }
    ws.embedded = x;
    ws.layers.assign(static_cast<std::size_t>(cfg_.layers), {});

    for (int l = 0; l < cfg_.layers; ++l) {
        auto& L = ws.layers[static_cast<std::size_t>(l)];
        const std::string p = "l" + std::to_string(l) + ".";
        L.x0 = x;
        layernorm_forward(L.x0, vec(p + "ln1.g"), vec(p + "ln1.b"), L.h1, L.mean1, L.rstd1);

        L.q = (L.h1 * mat(p + "attn.wq")).rowwise() + vec(p + "attn.bq").transpose();
        L.k = (L.h1 * mat(p + "attn.wk")).rowwise() + vec(p + "attn.bk").transpose();
        L.v = (L.h1 * mat(p + "attn.wv")).rowwise() + vec(p + "attn.bv").transpose();

        L.ctx.resize(T, d);
        L.attn.assign(static_cast<std::size_t>(cfg_.heads), Eigen::MatrixXd());
        for (int h = 0; h < cfg_.heads; ++h) {
            const auto qh = L.q.middleCols(h * hd, hd);
            const auto kh = L.k.middleCols(h * hd, hd);
            const auto vh = L.v.middleCols(h * hd, hd);
            Eigen::MatrixXd scores = qh * kh.transpose() * scale;  // T x T, fully bidirectional
            Eigen::MatrixXd& probs = L.attn[static_cast<std::size_t>(h)];
            probs.resize(T, T);
            for (int t = 0; t < T; ++t) {
                const double mx = scores.row(t).maxCoeff();
                Eigen::ArrayXd e = (scores.row(t).transpose().array() - mx).exp();
                probs.row(t) = (e / e.sum()).matrix().transpose();
            }
            L.ctx.middleCols(h * hd, hd) = probs * vh;
        }
        const Eigen::MatrixXd attn_out =
            (L.ctx * mat(p + "attn.wo")).rowwise() + vec(p + "attn.bo").transpose();
        L.x1 = L.x0 + attn_out;

        layernorm_forward(L.x1, vec(p + "ln2.g"), vec(p + "ln2.b"), L.h2, L.mean2, L.rstd2);
        L.u = (L.h2 * mat(p + "mlp.w1")).rowwise() + vec(p + "mlp.b1").transpose();
        L.g = L.u.unaryExpr([](double v) { return gelu(v); });
        const Eigen::MatrixXd mlp_out = (L.g * mat(p + "mlp.w2")).rowwise() + vec(p + "mlp.b2").transpose();
        x = L.x1 + mlp_out;
    }

    ws.xf = x;
    layernorm_forward(ws.xf, vec("lnf.g"), vec("lnf.b"), ws.fnorm, ws.meanf, ws.rstdf);
    Eigen::MatrixXd logits = (ws.fnorm * mat("out.w")).rowwise() + vec("out.b").transpose();
    if (!logits.allFinite()) throw NumericError("toy model produced non-finite logits");
    return logits;
}

void ToyDiffusionLM::backward(const Workspace& ws, const Eigen::MatrixXd& dlogits,
                              std::vector<double>& grads) const {
    if (grads.size() != params_.size()) throw ContractError("gradient buffer size mismatch");
    const int T = static_cast<int>(ws.tokens.size());
    const int d = cfg_.dim;
    const int hd = cfg_.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    const auto gmat = [&](const std::string& name) {
        for (const auto& t : tensors_) {
            if (t.name == name) return Eigen::Map<RowMatrixXd>(grads.data() + t.offset, t.rows, t.cols);
        }
        throw ContractError("unknown tensor: " + name);
    };
    const auto gvec = [&](const std::string& name) {
        for (const auto& t : tensors_) {
            if (t.name == name) return Eigen::Map<Eigen::VectorXd>(grads.data() + t.offset, t.rows);
        }
        throw ContractError("unknown tensor: " + name);
    };

    // Output head.
    gmat("out.w").noalias() += ws.fnorm.transpose() * dlogits;
    gvec("out.b") += dlogits.colwise().sum().transpose();
    Eigen::MatrixXd dfnorm = dlogits * mat("out.w").transpose();
    Eigen::MatrixXd dx =
        layernorm_backward(ws.xf, ws.meanf, ws.rstdf, vec("lnf.g"), dfnorm, gvec("lnf.g"), gvec("lnf.b"));

    for (int l = cfg_.layers - 1; l >= 0; --l) {
        const auto& L = ws.layers[static_cast<std::size_t>(l)];
        const std::string p = "l" + std::to_string(l) + ".";

        // MLP branch: x = x1 + W2 gelu(W1 h2 + b1) + b2.
        const Eigen::MatrixXd& dmlp_out = dx;
        gmat(p + "mlp.w2").noalias() += L.g.transpose() * dmlp_out;
        gvec(p + "mlp.b2") += dmlp_out.colwise().sum().transpose();
        Eigen::MatrixXd dgelu = dmlp_out * mat(p + "mlp.w2").transpose();
        Eigen::MatrixXd du = dgelu.cwiseProduct(L.u.unaryExpr([](double v) { return gelu_grad(v); }));
        gmat(p + "mlp.w1").noalias() += L.h2.transpose() * du;
        gvec(p + "mlp.b1") += du.colwise().sum().transpose();
        const Eigen::MatrixXd dh2 = du * mat(p + "mlp.w1").transpose();
        Eigen::MatrixXd dx1 =
            dx + layernorm_backward(L.x1, L.mean2, L.rstd2, vec(p + "ln2.g"), dh2, gvec(p + "ln2.g"),
                                    gvec(p + "ln2.b"));

        // Attention branch: x1 = x0 + Wo ctx + bo.
        const Eigen::MatrixXd& dattn_out = dx1;
        gmat(p + "attn.wo").noalias() += L.ctx.transpose() * dattn_out;
        gvec(p + "attn.bo") += dattn_out.colwise().sum().transpose();
        Eigen::MatrixXd dctx = dattn_out * mat(p + "attn.wo").transpose();

        Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(T, d);
        Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(T, d);
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(T, d);
        for (int h = 0; h < cfg_.heads; ++h) {
            const auto qh = L.q.middleCols(h * hd, hd);
            const auto kh = L.k.middleCols(h * hd, hd);
            const auto vh = L.v.middleCols(h * hd, hd);
            const Eigen::MatrixXd& probs = L.attn[static_cast<std::size_t>(h)];
            const auto dctx_h = dctx.middleCols(h * hd, hd);

            Eigen::MatrixXd dprobs = dctx_h * vh.transpose();
            dv.middleCols(h * hd, hd).noalias() += probs.transpose() * dctx_h;
            Eigen::MatrixXd dscores(T, T);
            for (int t = 0; t < T; ++t) {
                const double dot = dprobs.row(t).dot(probs.row(t));
                dscores.row(t) = (probs.row(t).array() * (dprobs.row(t).array() - dot)).matrix();
            }
            dq.middleCols(h * hd, hd).noalias() += dscores * kh * scale;
            dk.middleCols(h * hd, hd).noalias() += dscores.transpose() * qh * scale;
        }

        gmat(p + "attn.wq").noalias() += L.h1.transpose() * dq;
        gvec(p + "attn.bq") += dq.colwise().sum().transpose();
        gmat(p + "attn.wk").noalias() += L.h1.transpose() * dk;
        gvec(p + "attn.bk") += dk.colwise().sum().transpose();
        gmat(p + "attn.wv").noalias() += L.h1.transpose() * dv;
        gvec(p + "attn.bv") += dv.colwise().sum().transpose();

        const Eigen::MatrixXd dh1 =
            dq * mat(p + "attn.wq").transpose() + dk * mat(p + "attn.wk").transpose() +
            dv * mat(p + "attn.wv").transpose();
        dx = dx1 + layernorm_backward(L.x0, L.mean1, L.rstd1, vec(p + "ln1.g"), dh1, gvec(p + "ln1.g"),
                                      gvec(p + "ln1.b"));
    }

    // Embeddings.
    auto dtok = gmat("tok_emb");
    auto dpos = gmat("pos_emb");
    for (int t = 0; t < T; ++t) {
        dtok.row(ws.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
        dpos.row(t) += dx.row(t);
    }
}

namespace {

void check_positions(const SequenceState& state, std::span<const int> positions) {
    if (positions.empty()) throw ContractError("predict: no positions queried");
    for (const int pos : positions) {
        if (!state.is_masked(pos))
            throw ContractError("predict: position " + std::to_string(pos) + " is not masked");
    }
}

}  // namespace

PredictionFrame ToyDiffusionLM::predict(const SequenceState& state, std::span<const int> positions,
                                        double temperature) const {
    check_positions(state, positions);
    if (!(temperature > 0.0)) throw NumericError("temperature must be positive");
    const std::vector<TokenId> seq = state.full_sequence();
    const Eigen::MatrixXd logits = forward_logits(seq);
    const int prompt_len = static_cast<int>(state.prompt().size());

    PredictionFrame frame;
    frame.step = state.step_counter();
    frame.entries.reserve(positions.size());
    for (const int pos : positions) {
        const Eigen::VectorXd probs = softmax_scaled(logits.row(prompt_len + pos), temperature);
        int best = 0;
        for (int v = 1; v < cfg_.vocab_size; ++v) {
            if (probs(v) > probs(best)) best = v;  // exact ties keep the lowest id
        }
        frame.entries.push_back(FrameEntry{pos, best, probs(best)});
        if (record_distributions_) {
            frame.distributions.emplace_back(probs.data(), probs.data() + probs.size());
        }
    }
    return frame;
}

PredictionFrame ToyDiffusionLM::sample_candidate(const SequenceState& state, std::span<const int> positions,
                                                 double temperature, double top_p, Rng& rng) const {
    check_positions(state, positions);
    if (!(temperature > 0.0)) throw NumericError("temperature must be positive");
    if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("top_p must lie in (0, 1]");
    const std::vector<TokenId> seq = state.full_sequence();
    const Eigen::MatrixXd logits = forward_logits(seq);
    const int prompt_len = static_cast<int>(state.prompt().size());

    PredictionFrame frame;
    frame.step = state.step_counter();
    frame.entries.reserve(positions.size());
    for (const int pos : positions) {
        const Eigen::VectorXd probs = softmax_scaled(logits.row(prompt_len + pos), temperature);
        std::vector<int> order(static_cast<std::size_t>(cfg_.vocab_size));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs(a) > probs(b); });

        // Nucleus truncation: smallest prefix reaching top_p, at least one token.
        std::size_t kept = order.size();
        if (top_p < 1.0) {
            double cum = 0.0;
            for (std::size_t i = 0; i < order.size(); ++i) {
                cum += probs(order[i]);
                if (cum >= top_p) {
                    kept = i + 1;
                    break;
                }
            }
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < kept; ++i) norm += probs(order[i]);
        const double u = rng.uniform01() * norm;
        double acc = 0.0;
        int drawn = order[kept - 1];
        for (std::size_t i = 0; i < kept; ++i) {
            acc += probs(order[i]);
            if (u < acc) {
                drawn = order[i];
                break;
            }
        }
        // Confidence is the drawn token's probability in the scaled distribution.
        frame.entries.push_back(FrameEntry{pos, drawn, probs(drawn)});
    }
    return frame;
}

void ToyDiffusionLM::save_checkpoint(const std::string& path) const {
    std::ofstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot write checkpoint: " + path);
    std::vector<float> f32(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) f32[i] = static_cast<float>(params_[i]);
    bin.write(reinterpret_cast<const char*>(f32.data()),
              static_cast<std::streamsize>(f32.size() * sizeof(float)));
    if (!bin) throw IoError("short write to checkpoint: " + path);
    bin.close();

    nlohmann::ordered_json side;
    side["v"] = 1;
    side["dtype"] = "f32";
    side["config"] = {{"vocab_size", cfg_.vocab_size}, {"dim", cfg_.dim},         {"layers", cfg_.layers},
                      {"heads", cfg_.heads},           {"max_ctx", cfg_.max_ctx}, {"mlp_mult", cfg_.mlp_mult}};
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (const auto& t : tensors_) {
        tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", t.offset}, {"size", t.size()}});
    }
    side["tensors"] = tensors;
    std::ofstream meta(path + ".json");
    if (!meta) throw IoError("cannot write checkpoint sidecar: " + path + ".json");
    meta << side.dump(2) << "\n";
}

ToyDiffusionLM ToyDiffusionLM::load_checkpoint(const std::string& path) {
    std::ifstream meta(path + ".json");
    if (!meta) throw IoError("cannot open checkpoint sidecar: " + path + ".json");
    nlohmann::json side;
    try {
        meta >> side;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint sidecar: ") + e.what());
    }
    if (!side.contains("v") || side.at("v").get<int>() != 1)
        throw FormatError("checkpoint sidecar missing format version v=1");
    if (side.at("dtype").get<std::string>() != "f32")
        throw FormatError("checkpoint dtype must be f32");
    ToyModelConfig cfg;
    const auto& c = side.at("config");
    cfg.vocab_size = c.at("vocab_size").get<int>();
    cfg.dim = c.at("dim").get<int>();
    cfg.layers = c.at("layers").get<int>();
    cfg.heads = c.at("heads").get<int>();
    cfg.max_ctx = c.at("max_ctx").get<int>();
    cfg.mlp_mult = c.at("mlp_mult").get<int>();

    ToyDiffusionLM model(cfg);
    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot open checkpoint: " + path);
    std::vector<float> f32(model.params_.size());
    bin.read(reinterpret_cast<char*>(f32.data()), static_cast<std::streamsize>(f32.size() * sizeof(float)));
    if (bin.gcount() != static_cast<std::streamsize>(f32.size() * sizeof(float)))
        throw FormatError("checkpoint too short for its config: " + path);
    char extra;
    if (bin.read(&extra, 1); bin.gcount() != 0)
        throw FormatError("checkpoint longer than its config describes: " + path);
    for (std::size_t i = 0; i < f32.size(); ++i) model.params_[i] = static_cast<double>(f32[i]);
    return model;
}

}  // namespace rrd
