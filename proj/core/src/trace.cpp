#include "rrdiffuse/trace.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rrdiffuse/errors.hpp"

namespace rrd {

using ordered_json = nlohmann::ordered_json;

std::vector<TokenId> DecodeTrace::truncated_response() const {
    std::vector<TokenId> out;
    for (const TokenId t : final_response) {
        if (t == decode_config.eos_id) break;
        out.push_back(t);
    }
    return out;
}

void DecodeTrace::validate() const {
    std::vector<bool> seen(static_cast<std::size_t>(decode_config.gen_len), false);
    int prev_block = 0;
    int prev_step = -1;
    for (const auto& record : steps) {
        if (record.step != prev_step + 1) throw ContractError("trace step indices are not consecutive");
        prev_step = record.step;
        if (record.block < prev_block) throw ContractError("trace block order decreases");
        prev_block = record.block;
        if (record.finalizations.empty()) throw ContractError("trace step finalizes nothing");
        for (const auto& f : record.finalizations) {
            if (f.position < 0 || f.position >= decode_config.gen_len)
                throw ContractError("trace finalization outside the response");
            if (seen[static_cast<std::size_t>(f.position)])
                throw ContractError("position " + std::to_string(f.position) + " finalized twice in trace");
            seen[static_cast<std::size_t>(f.position)] = true;
            if (f.position / decode_config.block_size != record.block)
                throw ContractError("trace finalization outside its step's block");
            if (static_cast<int>(final_response.size()) == decode_config.gen_len &&
                final_response[static_cast<std::size_t>(f.position)] != f.token)
                throw ContractError("trace final_response disagrees with events");
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw ContractError("position " + std::to_string(i) + " never finalized in trace");
    }
}

namespace {

ordered_json strategy_to_json(const StrategyConfig& s) {
    ordered_json j;
    j["kind"] = std::string(to_string(s.kind));
    j["top_k"] = s.top_k;
    j["tau"] = s.tau;
    j["tau_base"] = s.tau_base;
    j["tau_s"] = s.tau_s;
    j["tau_t"] = s.tau_t;
    j["m_consec"] = s.m_consec;
    j["window"] = s.window;
    j["position_rule"] = std::string(to_string(s.position_rule));
    j["temporal_rule"] = std::string(to_string(s.temporal_rule));
    j["conf_cluster"] = s.conf_cluster_enabled;
    j["token_cluster"] = s.token_cluster_enabled;
    j["temporal"] = s.temporal_enabled;
    return j;
}

StrategyConfig strategy_from_json(const nlohmann::json& j) {
    StrategyConfig s;
    s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
    s.top_k = j.at("top_k").get<int>();
    s.tau = j.at("tau").get<double>();
    s.tau_base = j.at("tau_base").get<double>();
    s.tau_s = j.at("tau_s").get<double>();
    s.tau_t = j.at("tau_t").get<double>();
    s.m_consec = j.at("m_consec").get<int>();
    s.window = j.at("window").get<int>();
    s.position_rule = position_rule_from_string(j.at("position_rule").get<std::string>());
    s.temporal_rule = temporal_rule_from_string(j.at("temporal_rule").get<std::string>());
    s.conf_cluster_enabled = j.at("conf_cluster").get<bool>();
    s.token_cluster_enabled = j.at("token_cluster").get<bool>();
    s.temporal_enabled = j.at("temporal").get<bool>();
    return s;
}

ordered_json decode_to_json(const DecodeConfig& c, const StrategyConfig& s) {
    ordered_json j;
    j["gen_len"] = c.gen_len;
    j["block_size"] = c.block_size;
    j["vocab_size"] = c.vocab_size;
    j["mask_id"] = c.mask_id;
    j["eos_id"] = c.eos_id;
    j["seed"] = c.seed;
    j["temperature"] = c.temperature;
    j["top_p"] = c.top_p;
    j["strategy"] = strategy_to_json(s);
    return j;
}

}  // namespace

void write_trace_jsonl(const DecodeTrace& trace, std::ostream& out, TraceLevel level) {
    ordered_json header;
    header["v"] = 1;
    header["config"] = decode_to_json(trace.decode_config, trace.strategy_config);
    header["prompt"] = trace.prompt;
    out << header.dump() << "\n";
    for (const auto& record : trace.steps) {
        ordered_json j;
        j["step"] = record.step;
        j["block"] = record.block;
        ordered_json preds = ordered_json::array();
        if (level == TraceLevel::Full) {
            for (const auto& e : record.frame.entries)
                preds.push_back(ordered_json::array({e.position, e.token, e.confidence}));
        }
        j["preds"] = preds;
        ordered_json finals = ordered_json::array();
        for (const auto& f : record.finalizations)
            finals.push_back(
                ordered_json::array({f.position, f.token, f.confidence, std::string(to_string(f.reason))}));
        j["final"] = finals;
        out << j.dump() << "\n";
    }
}

std::string trace_to_jsonl(const DecodeTrace& trace, TraceLevel level) {
    std::ostringstream out;
    write_trace_jsonl(trace, out, level);
    return out.str();
}

void write_trace_file(const DecodeTrace& trace, const std::string& path, TraceLevel level) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write trace file: " + path);
    write_trace_jsonl(trace, out, level);
}

DecodeTrace read_trace_jsonl(std::istream& in) {
    DecodeTrace trace;
    std::string line;
    bool have_header = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
        try {
            if (!have_header) {
                if (!j.contains("v") || j.at("v").get<int>() != 1)
                    throw FormatError("trace header missing format version v=1");
                const auto& cfg = j.at("config");
                trace.decode_config.gen_len = cfg.at("gen_len").get<int>();
                trace.decode_config.block_size = cfg.at("block_size").get<int>();
                trace.decode_config.vocab_size = cfg.at("vocab_size").get<int>();
                trace.decode_config.mask_id = cfg.at("mask_id").get<TokenId>();
                trace.decode_config.eos_id = cfg.at("eos_id").get<TokenId>();
                trace.decode_config.seed = cfg.at("seed").get<std::uint64_t>();
                trace.decode_config.temperature = cfg.at("temperature").get<double>();
                trace.decode_config.top_p = cfg.at("top_p").get<double>();
                trace.strategy_config = strategy_from_json(cfg.at("strategy"));
                trace.prompt = j.at("prompt").get<std::vector<TokenId>>();
                have_header = true;
                continue;
            }
            StepRecord record;
            record.step = j.at("step").get<int>();
            record.block = j.at("block").get<int>();
            record.frame.step = record.step;
            for (const auto& p : j.at("preds")) {
                FrameEntry e;
                e.position = p.at(0).get<int>();
                e.token = p.at(1).get<TokenId>();
                e.confidence = p.at(2).get<double>();
                record.frame.entries.push_back(e);
            }
            for (const auto& f : j.at("final")) {
                FinalizeEvent ev;
                ev.position = f.at(0).get<int>();
                ev.token = f.at(1).get<TokenId>();
                ev.confidence = f.at(2).get<double>();
                ev.reason = reason_from_string(f.at(3).get<std::string>());
                record.finalizations.push_back(ev);
            }
            trace.steps.push_back(std::move(record));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw FormatError("trace stream has no header line");

    trace.final_response.assign(static_cast<std::size_t>(trace.decode_config.gen_len),
                                trace.decode_config.mask_id);
    for (const auto& record : trace.steps) {
        for (const auto& f : record.finalizations) {
            if (f.position < 0 || f.position >= trace.decode_config.gen_len)
                throw FormatError("trace finalization outside the response");
            trace.final_response[static_cast<std::size_t>(f.position)] = f.token;
        }
    }
    trace.validate();
    return trace;
}

DecodeTrace read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace file: " + path);
    return read_trace_jsonl(in);
}

}  // namespace rrd
