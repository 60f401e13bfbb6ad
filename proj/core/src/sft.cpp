#include "rrdiffuse/sft.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rrdiffuse/errors.hpp"
#include "rrdiffuse/log.hpp"
#include "rrdiffuse/redundancy.hpp"

namespace rrd {

std::vector<std::uint8_t> MaskPair::complement() const {
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 0 : 1;
    return out;
}

MaskPair sample_mask_pair(int block_size, double p_m, Rng& rng) {
    if (!(p_m > 0.0) || !(p_m < 1.0)) throw ConfigError("p_m must lie strictly inside (0, 1)");
    if (block_size < 2) throw ConfigError("block_size must be >= 2 for complementary masking");
    MaskPair pair;
    pair.p_m = p_m;
    pair.mask.resize(static_cast<std::size_t>(block_size));
    // A view with zero masked tokens is undefined under the block loss, so
    // all-zero and all-one draws are resampled.
    while (true) {
        int ones = 0;
        for (auto& bit : pair.mask) {
            bit = rng.bernoulli(p_m) ? 1 : 0;
            ones += bit;
        }
        if (ones > 0 && ones < block_size) break;
    }
    return pair;
}

SftView build_view(const SftExample& example, const DecodeConfig& cfg, const MaskPair& pair,
                   bool complement_view) {
    cfg.validate();
    if (static_cast<int>(example.response.size()) != cfg.gen_len)
        throw ContractError("example response length " + std::to_string(example.response.size()) +
                            " does not match gen_len " + std::to_string(cfg.gen_len));
    if (pair.block_index < 0 || pair.block_index >= cfg.num_blocks())
        throw ContractError("mask block index out of range");
    if (static_cast<int>(pair.mask.size()) != cfg.block_size)
        throw ContractError("mask length does not match block_size");

    const std::vector<std::uint8_t> bits = complement_view ? pair.complement() : pair.mask;
    SftView view;
    view.block_index = pair.block_index;
    view.block_size = cfg.block_size;
    view.mask_prob = complement_view ? 1.0 - pair.p_m : pair.p_m;

    const int prompt_len = static_cast<int>(example.prompt.size());
    view.x_view = example.prompt;
    view.x_view.insert(view.x_view.end(), example.response.begin(), example.response.end());
    const int block_begin = pair.block_index * cfg.block_size;
    for (int pos = 0; pos < cfg.gen_len; ++pos) {
        const int block = pos / cfg.block_size;
        bool masked = false;
        if (block > pair.block_index) {
            masked = true;
        } else if (block == pair.block_index) {
            masked = bits[static_cast<std::size_t>(pos - block_begin)] != 0;
        }
        if (masked) {
            view.x_view[static_cast<std::size_t>(prompt_len + pos)] = cfg.mask_id;
            if (block == pair.block_index) {
                view.masked_rows.push_back(prompt_len + pos);
                view.targets.push_back(example.response[static_cast<std::size_t>(pos)]);
            }
        }
    }
    if (view.masked_rows.empty()) throw ContractError("view masks no tokens in its block");
    return view;
}

SemiArView sample_semi_ar_view(const SftExample& example, const DecodeConfig& cfg, double p_m, Rng& rng) {
    cfg.validate();
    SemiArView out;
    out.block_index = static_cast<int>(rng.uniform_int(0, cfg.num_blocks() - 1));
    out.pair = sample_mask_pair(cfg.block_size, p_m, rng);
    out.pair.block_index = out.block_index;
    out.view = build_view(example, cfg, out.pair, /*complement_view=*/false);
    return out;
}

namespace {

// Shared cross-entropy core: forward once, sum -log p(target) over the
// masked rows scaled by coeff, optionally backpropagating coeff-scaled
// gradients. Rows whose target probability falls below the floor are clamped
// and excluded from the gradient.
double masked_ce(const ToyDiffusionLM& model, std::span<const TokenId> x_view, std::span<const int> rows,
                 std::span<const TokenId> targets, double coeff, double floor, std::vector<double>* grads) {
    ToyDiffusionLM::Workspace ws;
    const Eigen::MatrixXd logits = model.forward_logits(x_view, ws);
    const int vocab = model.config().vocab_size;

    Eigen::MatrixXd dlogits;
    if (grads != nullptr) dlogits = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());

    double loss = 0.0;
    int clamped = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int row = rows[i];
        const TokenId target = targets[i];
        if (target < 0 || target >= vocab) throw ContractError("loss target outside vocabulary");
        const double mx = logits.row(row).maxCoeff();
        Eigen::ArrayXd e = (logits.row(row).transpose().array() - mx).exp();
        const double denom = e.sum();
        const double p = e(target) / denom;
        if (p < floor) {
            ++clamped;
            loss += coeff * -std::log(floor);
            continue;  // clamped terms carry no gradient
        }
        loss += coeff * -std::log(p);
        if (grads != nullptr) {
            dlogits.row(row) = (coeff * (e / denom)).matrix().transpose();
            dlogits(row, target) -= coeff;
        }
    }
    if (clamped > 0)
        log::warn("clamped " + std::to_string(clamped) + " log-probabilities at floor " +
                  std::to_string(floor));
    if (grads != nullptr) model.backward(ws, dlogits, *grads);
    if (!std::isfinite(loss)) throw NumericError("masked cross-entropy became non-finite");
    return loss;
}

}  // namespace

double sft_loss(const ToyDiffusionLM& model, const SftView& view, double log_prob_floor) {
    const double norm = 1.0 / (view.block_size * view.mask_prob);
    return masked_ce(model, view.x_view, view.masked_rows, view.targets, norm, log_prob_floor, nullptr);
}

double sft_loss_grad(const ToyDiffusionLM& model, const SftView& view, std::vector<double>& grads,
                     double coeff, double log_prob_floor) {
    const double norm = coeff / (view.block_size * view.mask_prob);
    const double loss =
        masked_ce(model, view.x_view, view.masked_rows, view.targets, norm, log_prob_floor, &grads);
    return loss / coeff;
}

double sft_pair_loss(const ToyDiffusionLM& model, const SftExample& example, const DecodeConfig& cfg,
                     const MaskPair& pair, double log_prob_floor) {
    const SftView m_view = build_view(example, cfg, pair, false);
    const SftView c_view = build_view(example, cfg, pair, true);
    return 0.5 * (sft_loss(model, m_view, log_prob_floor) + sft_loss(model, c_view, log_prob_floor));
}

double sft_pair_loss_grad(const ToyDiffusionLM& model, const SftExample& example, const DecodeConfig& cfg,
                          const MaskPair& pair, std::vector<double>& grads, double coeff,
                          double log_prob_floor) {
    const SftView m_view = build_view(example, cfg, pair, false);
    const SftView c_view = build_view(example, cfg, pair, true);
    const double lm = sft_loss_grad(model, m_view, grads, 0.5 * coeff, log_prob_floor);
    const double lc = sft_loss_grad(model, c_view, grads, 0.5 * coeff, log_prob_floor);
    return 0.5 * (lm + lc);
}

namespace {

struct Corruption {
    std::vector<TokenId> x_t;
    std::vector<int> rows;
    std::vector<TokenId> targets;
};

Corruption corrupt(std::span<const TokenId> prompt, std::span<const TokenId> response, double t,
                   TokenId mask_id, Rng& rng) {
    Corruption c;
    c.x_t.assign(prompt.begin(), prompt.end());
    c.x_t.insert(c.x_t.end(), response.begin(), response.end());
    const int prompt_len = static_cast<int>(prompt.size());
    for (int i = 0; i < static_cast<int>(response.size()); ++i) {
        if (rng.bernoulli(t)) {
            c.x_t[static_cast<std::size_t>(prompt_len + i)] = mask_id;
            c.rows.push_back(prompt_len + i);
            c.targets.push_back(response[static_cast<std::size_t>(i)]);
        }
    }
    return c;
}

void check_noise_level(double t) {
    if (!(t > 0.0) || t > 1.0)
        throw NumericError("noise level t must lie in (0, 1]; the 1/t weight diverges at 0");
}

}  // namespace

double pretrain_loss(const ToyDiffusionLM& model, std::span<const TokenId> prompt,
                     std::span<const TokenId> response, double t, Rng& rng, double log_prob_floor) {
    check_noise_level(t);
    const Corruption c = corrupt(prompt, response, t, model.config().vocab_size - 1, rng);
    if (c.rows.empty()) return 0.0;
    return masked_ce(model, c.x_t, c.rows, c.targets, 1.0 / t, log_prob_floor, nullptr);
}

double pretrain_loss_grad(const ToyDiffusionLM& model, std::span<const TokenId> prompt,
                          std::span<const TokenId> response, double t, Rng& rng, std::vector<double>& grads,
                          double coeff, double log_prob_floor) {
    check_noise_level(t);
    const Corruption c = corrupt(prompt, response, t, model.config().vocab_size - 1, rng);
    if (c.rows.empty()) return 0.0;
    return masked_ce(model, c.x_t, c.rows, c.targets, coeff / t, log_prob_floor, &grads) / coeff;
}

std::vector<SftExample> collect_dataset(std::span<const std::vector<TokenId>> prompts,
                                        const Predictor& predictor, const DecodeConfig& cfg,
                                        const StrategyConfig& strategy, const CollectOptions& options,
                                        const Oracle& oracle) {
    if (options.k_cand < 2) throw ConfigError("k_cand must be >= 2: selection requires alternatives");
    if (options.jobs < 1) throw ConfigError("jobs must be >= 1");
    cfg.validate();
    strategy.validate();

    std::vector<std::optional<SftExample>> slots(prompts.size());
    std::atomic<std::size_t> next{0};

    const auto worker = [&]() {
        while (true) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= prompts.size()) return;
            const auto& prompt = prompts[idx];
            std::optional<SftExample> best;
            for (int c = 0; c < options.k_cand; ++c) {
                DecodeConfig run_cfg = cfg;
                run_cfg.temperature = options.temperature;
                run_cfg.top_p = options.top_p;
                run_cfg.seed = Rng::derive(options.seed,
                                           idx * static_cast<std::size_t>(options.k_cand) + c);
                DecodeTrace trace;
                try {
                    trace = run_decode(SequenceState(prompt, run_cfg), predictor, strategy,
                                       DecodeMode::Sample);
                } catch (const std::exception& e) {
                    log::warn("candidate decode failed for prompt " + std::to_string(idx) + ": " + e.what());
                    continue;
                }
                bool ok = false;
                try {
                    ok = oracle(idx, trace.final_response);
                } catch (const std::exception& e) {
                    log::warn("oracle failed for prompt " + std::to_string(idx) + ": " + e.what() +
                              "; skipping prompt");
                    best.reset();
                    goto next_prompt;
                }
                if (!ok) continue;
                const long r_total = score_trace(trace).r_total;
                const bool better =
                    !best.has_value() || (options.rule == SelectionRule::Min ? r_total < best->r_total
                                                                             : r_total > best->r_total);
                if (better) {
                    SftExample ex;
                    ex.prompt = prompt;
                    // Canonical EOS padding: truncate at the first EOS, pad back.
                    ex.response = trace.truncated_response();
                    ex.response.resize(static_cast<std::size_t>(cfg.gen_len), cfg.eos_id);
                    ex.r_total = r_total;
                    ex.correct = true;
                    best = std::move(ex);
                }
            }
            if (best.has_value()) slots[idx] = std::move(best);
        next_prompt:;
        }
    };

    if (options.jobs == 1 || prompts.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int jobs = std::min<int>(options.jobs, static_cast<int>(prompts.size()));
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<SftExample> dataset;
    for (auto& slot : slots) {
        if (slot.has_value()) dataset.push_back(std::move(*slot));
    }
    return dataset;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (!(p_m_min > 0.0) || !(p_m_max < 1.0) || p_m_min > p_m_max)
        throw ConfigError("p_m range must satisfy 0 < p_m_min <= p_m_max < 1");
    if (k_cand < 2) throw ConfigError("k_cand must be >= 2");
    if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
    if (grad_accum < 1) throw ConfigError("grad_accum must be >= 1");
    if (!(log_prob_floor > 0.0)) throw ConfigError("log_prob_floor must be positive");
}

namespace {

// Per-example loss+grad closure: fn(example_index, rng, grads, coeff) -> loss.
using ExampleFn = std::function<double(std::size_t, Rng&, std::vector<double>&, double)>;

bool all_finite(const std::vector<double>& v) {
    for (const double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

TrainResult run_training_loop(ToyDiffusionLM& model, std::size_t n_examples, const ExampleFn& example_fn,
                              const TrainConfig& tc, const EvalHook& eval_hook) {
    tc.validate();
    if (n_examples == 0) throw ContractError("training dataset is empty");

    TrainResult result;
    auto& params = model.params();
    std::vector<double> grads(params.size(), 0.0);
    std::vector<double> adam_m(params.size(), 0.0);
    std::vector<double> adam_v(params.size(), 0.0);

    Rng data_rng(Rng::derive(tc.seed, 0xdata));
    Rng probe_rng(Rng::derive(tc.seed, 0xe0a1));

    const auto emit_row = [&](long iter, double loss) {
        DynamicsRow row;
        row.iter = iter;
        row.loss = loss;
        if (eval_hook) {
            const EvalStats stats = eval_hook(model);
            row.r_total_mean = stats.r_total_mean;
            row.nfe_mean = stats.nfe_mean;
            row.accuracy = stats.accuracy;
        }
        result.dynamics.push_back(row);
    };

    // Iter-0 probe: loss of the untouched model on a leading slice, no step.
    {
        std::vector<double> scratch(params.size(), 0.0);
        const std::size_t probe_n = std::min<std::size_t>(n_examples, static_cast<std::size_t>(tc.batch_size));
        double probe_loss = 0.0;
        for (std::size_t i = 0; i < probe_n; ++i)
            probe_loss += example_fn(i, probe_rng, scratch, 1.0 / static_cast<double>(probe_n));
        emit_row(0, probe_loss);
    }

    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), 0);

    long iter = 0;
    double interval_loss = 0.0;
    long interval_batches = 0;
    bool row_pending = false;

    const long micro_per_step = tc.grad_accum;
    long micro_in_step = 0;
    std::size_t examples_in_step = 0;
    std::fill(grads.begin(), grads.end(), 0.0);
    double step_loss = 0.0;

    for (int epoch = 0; epoch < tc.epochs && !result.aborted_nonfinite; ++epoch) {
        // Fisher-Yates shuffle from the run's data stream.
        for (std::size_t i = n_examples; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(data_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t begin = 0; begin < n_examples; begin += static_cast<std::size_t>(tc.batch_size)) {
            const std::size_t end = std::min(n_examples, begin + static_cast<std::size_t>(tc.batch_size));
            const std::size_t batch_n = end - begin;
            double batch_loss = 0.0;
            for (std::size_t i = begin; i < end; ++i)
                batch_loss += example_fn(order[i], data_rng, grads, 1.0) / static_cast<double>(batch_n);
            step_loss += batch_loss;
            examples_in_step += batch_n;
            ++micro_in_step;
            if (micro_in_step < micro_per_step) continue;

            // Average accumulated micro-batches and take one Adam step.
            const double inv_micro = 1.0 / static_cast<double>(micro_in_step);
            step_loss *= inv_micro;
            const double grad_scale = static_cast<double>(tc.batch_size) /
                                      static_cast<double>(examples_in_step);
            if (!std::isfinite(step_loss) || !all_finite(grads)) {
                log::error("non-finite loss or gradient at iter " + std::to_string(iter) +
                           "; aborting with last-good parameters");
                result.aborted_nonfinite = true;
                break;
            }
            ++iter;
            const double b1t = 1.0 - std::pow(tc.adam_beta1, static_cast<double>(iter));
            const double b2t = 1.0 - std::pow(tc.adam_beta2, static_cast<double>(iter));
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = grads[i] * grad_scale / static_cast<double>(tc.batch_size) /
                                 static_cast<double>(micro_per_step) * static_cast<double>(micro_per_step);
                adam_m[i] = tc.adam_beta1 * adam_m[i] + (1.0 - tc.adam_beta1) * g;
                adam_v[i] = tc.adam_beta2 * adam_v[i] + (1.0 - tc.adam_beta2) * g * g;
                params[i] -= tc.lr * (adam_m[i] / b1t) / (std::sqrt(adam_v[i] / b2t) + tc.adam_eps);
            }
            interval_loss += step_loss;
            ++interval_batches;
            row_pending = true;
            std::fill(grads.begin(), grads.end(), 0.0);
            step_loss = 0.0;
            micro_in_step = 0;
            examples_in_step = 0;

            if (iter % tc.eval_interval == 0) {
                emit_row(iter, interval_loss / static_cast<double>(interval_batches));
                interval_loss = 0.0;
                interval_batches = 0;
                row_pending = false;
            }
        }
    }
    if (row_pending && interval_batches > 0)
        emit_row(iter, interval_loss / static_cast<double>(interval_batches));
    result.steps = iter;
    return result;
}

}  // namespace

TrainResult train(ToyDiffusionLM& model, std::span<const SftExample> dataset, const DecodeConfig& cfg,
                  const TrainConfig& tc, const EvalHook& eval_hook) {
    cfg.validate();
    for (const auto& ex : dataset) {
        if (static_cast<int>(ex.response.size()) != cfg.gen_len)
            throw ContractError("dataset response length does not match gen_len");
    }
    const ExampleFn fn = [&model, &dataset, &cfg, &tc](std::size_t idx, Rng& rng, std::vector<double>& grads,
                                                       double coeff) {
        const double p_m = tc.p_m_min == tc.p_m_max ? tc.p_m_min : rng.uniform(tc.p_m_min, tc.p_m_max);
        SemiArView drawn = sample_semi_ar_view(dataset[idx], cfg, p_m, rng);
        return sft_pair_loss_grad(model, dataset[idx], cfg, drawn.pair, grads, coeff, tc.log_prob_floor) *
               coeff / coeff;
    };
    return run_training_loop(model, dataset.size(), fn, tc, eval_hook);
}

TrainResult pretrain(ToyDiffusionLM& model, std::span<const SftExample> dataset, const DecodeConfig& cfg,
                     const TrainConfig& tc, const EvalHook& eval_hook) {
    cfg.validate();
    const ExampleFn fn = [&model, &dataset, &tc](std::size_t idx, Rng& rng, std::vector<double>& grads,
                                                 double coeff) {
        const double t = 1.0 - rng.uniform01();  // (0, 1]
        return pretrain_loss_grad(model, dataset[idx].prompt, dataset[idx].response, t, rng, grads, coeff,
                                  tc.log_prob_floor);
    };
    return run_training_loop(model, dataset.size(), fn, tc, eval_hook);
}

void write_dataset_jsonl(std::span<const SftExample> dataset, std::ostream& out) {
    for (const auto& ex : dataset) {
        nlohmann::ordered_json j;
        j["prompt"] = ex.prompt;
        j["response"] = ex.response;
        j["r_total"] = ex.r_total;
        out << j.dump() << "\n";
    }
}

std::vector<SftExample> read_dataset_jsonl(std::istream& in) {
    std::vector<SftExample> dataset;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            SftExample ex;
            ex.prompt = j.at("prompt").get<std::vector<TokenId>>();
            ex.response = j.at("response").get<std::vector<TokenId>>();
            ex.r_total = j.at("r_total").get<long>();
            ex.correct = true;
            dataset.push_back(std::move(ex));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return dataset;
}

void write_dataset_file(std::span<const SftExample> dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset file: " + path);
    write_dataset_jsonl(dataset, out);
}

std::vector<SftExample> read_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    return read_dataset_jsonl(in);
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string dynamics_csv(std::span<const DynamicsRow> rows) {
    std::ostringstream out;
    out << "iter,loss,r_total_mean,nfe_mean,accuracy\n";
    for (const auto& r : rows) {
        out << r.iter << ',' << fmt_double(r.loss) << ',' << fmt_double(r.r_total_mean) << ','
            << fmt_double(r.nfe_mean) << ',' << fmt_double(r.accuracy) << '\n';
    }
    return out.str();
}

}  // namespace rrd
