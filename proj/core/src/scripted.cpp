#include "rrdiffuse/scripted.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "rrdiffuse/errors.hpp"

namespace rrd {

using ordered_json = nlohmann::ordered_json;

void ScriptedScenario::add(int step, int pos, TokenId token, double confidence) {
    const auto key = std::make_pair(step, pos);
    if (cells.count(key) != 0)
        throw FormatError("duplicate scripted cell at step " + std::to_string(step) + ", pos " +
                          std::to_string(pos));
    cells[key] = FrameEntry{pos, token, confidence};
}

FrameEntry ScriptedScenario::lookup(int step, int pos) const {
    const auto it = cells.find(std::make_pair(step, pos));
    if (it != cells.end()) return it->second;
    return FrameEntry{pos, fill_token, fill_confidence};
}

ScriptedScenario ScriptedScenario::load_jsonl(std::istream& in) {
    ScriptedScenario scenario;
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
            throw FormatError("scenario line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("v") || j.at("v").get<int>() != 1)
                throw FormatError("scenario header missing format version v=1");
            if (j.contains("vocab")) scenario.vocab_size = j.at("vocab").get<int>();
            if (j.contains("fill")) {
                scenario.fill_token = j.at("fill").at("token").get<TokenId>();
                scenario.fill_confidence = j.at("fill").at("conf").get<double>();
            }
            have_header = true;
            continue;
        }
        try {
            scenario.add(j.at("step").get<int>(), j.at("pos").get<int>(), j.at("token").get<TokenId>(),
                         j.at("conf").get<double>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("scenario line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw FormatError("scenario stream has no header line");
    return scenario;
}

ScriptedScenario ScriptedScenario::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file: " + path);
    return load_jsonl(in);
}

void ScriptedScenario::save_jsonl(std::ostream& out) const {
    ordered_json header;
    header["v"] = 1;
    header["vocab"] = vocab_size;
    header["fill"] = ordered_json{{"token", fill_token}, {"conf", fill_confidence}};
    out << header.dump() << "\n";
    for (const auto& [key, entry] : cells) {
        ordered_json j;
        j["step"] = key.first;
        j["pos"] = key.second;
        j["token"] = entry.token;
        j["conf"] = entry.confidence;
        out << j.dump() << "\n";
    }
}

void ScriptedScenario::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write scenario file: " + path);
    save_jsonl(out);
}

PredictionFrame ScriptedPredictor::predict(const SequenceState& state, std::span<const int> positions,
                                           double /*temperature*/) const {
    if (positions.empty()) throw ContractError("predict: no positions queried");
    PredictionFrame frame;
    frame.step = state.step_counter();
    frame.entries.reserve(positions.size());
    for (const int pos : positions) {
        if (!state.is_masked(pos))
            throw ContractError("predict: position " + std::to_string(pos) + " is not masked");
        frame.entries.push_back(scenario_.lookup(frame.step, pos));
    }
    return frame;
}

PredictionFrame ScriptedPredictor::sample_candidate(const SequenceState& state, std::span<const int> positions,
                                                    double temperature, double /*top_p*/, Rng& /*rng*/) const {
    // Scripted replays are point values; sampling degenerates to replay.
    return predict(state, positions, temperature);
}

}  // namespace rrd
