#include "rrdiffuse/tasks.hpp"

#include <set>
#include <sstream>

#include "rrdiffuse/errors.hpp"

namespace rrd::tasks {

std::string detokenize(std::span<const TokenId> tokens) {
    std::ostringstream out;
    bool first = true;
    for (const TokenId t : tokens) {
        if (!first) out << ' ';
        first = false;
        if (t >= kLetterBase && t < kLetterBase + 26) {
            out << static_cast<char>('a' + (t - kLetterBase));
        } else if (t >= kDigitBase && t < kDigitBase + 10) {
            out << static_cast<char>('0' + (t - kDigitBase));
        } else if (t == kAnswerMark) {
            out << '=';
        } else if (t == kOpReverse) {
            out << "<rev>";
        } else if (t == kOpShift) {
            out << "<shift>";
        } else if (t == kOpAddMod) {
            out << "<addmod>";
        } else if (t == kOpCopy) {
            out << "<copy>";
        } else if (t == kEos) {
            out << "<eos>";
        } else if (t == kMask) {
            out << "<mask>";
        } else {
            out << "<" << t << ">";
        }
    }
    return out.str();
}

void TaskSpec::validate() const {
    if (!is_known_family(family)) throw ConfigError("unknown task family: '" + family + "'");
    if (family != "addmod") {
        if (length < 1) throw ConfigError("task length must be >= 1");
        if (alphabet < 2 || alphabet > 26) throw ConfigError("task alphabet must lie in [2, 26]");
    }
}

bool is_known_family(std::string_view family) {
    return family == "copy" || family == "reverse" || family == "shift" || family == "addmod";
}

namespace {

TaskInstance make_instance(const TaskSpec& spec, Rng& rng) {
    TaskInstance inst;
    if (spec.family == "addmod") {
        const int a = static_cast<int>(rng.uniform_int(0, 9));
        const int b = static_cast<int>(rng.uniform_int(0, 9));
        const int m = static_cast<int>(rng.uniform_int(2, 9));
        inst.prompt = {kOpAddMod, digit(a), digit(b), digit(m), kAnswerMark};
        inst.answer = {digit((a + b) % m)};
        return inst;
    }
    std::vector<int> letters(static_cast<std::size_t>(spec.length));
    for (auto& c : letters) c = static_cast<int>(rng.uniform_int(0, spec.alphabet - 1));
    if (spec.family == "copy") {
        inst.prompt.push_back(kOpCopy);
        for (const int c : letters) inst.prompt.push_back(letter(c));
        inst.prompt.push_back(kAnswerMark);
        for (const int c : letters) inst.answer.push_back(letter(c));
    } else if (spec.family == "reverse") {
        inst.prompt.push_back(kOpReverse);
        for (const int c : letters) inst.prompt.push_back(letter(c));
        inst.prompt.push_back(kAnswerMark);
        for (auto it = letters.rbegin(); it != letters.rend(); ++it) inst.answer.push_back(letter(*it));
    } else {  // shift
        const int k = static_cast<int>(rng.uniform_int(1, spec.alphabet - 1));
        inst.prompt.push_back(kOpShift);
        inst.prompt.push_back(digit(k));
        for (const int c : letters) inst.prompt.push_back(letter(c));
        inst.prompt.push_back(kAnswerMark);
        for (const int c : letters) inst.answer.push_back(letter((c + k) % spec.alphabet));
    }
    return inst;
}

}  // namespace

std::vector<TaskInstance> make_corpus(const TaskSpec& spec, int count, std::uint64_t seed) {
    spec.validate();
    if (count < 0) throw ConfigError("corpus count must be nonnegative");
    std::vector<TaskInstance> corpus;
    std::set<std::vector<TokenId>> seen;
    Rng rng(Rng::derive(seed, 0x7a5c5ULL));
    int attempts = 0;
    const int max_attempts = count * 200 + 1000;
    while (static_cast<int>(corpus.size()) < count) {
        if (++attempts > max_attempts)
            throw ConfigError("task space too small for " + std::to_string(count) + " distinct instances");
        TaskInstance inst = make_instance(spec, rng);
        if (!seen.insert(inst.prompt).second) continue;
        corpus.push_back(std::move(inst));
    }
    return corpus;
}

bool oracle_check(const TaskInstance& instance, std::span<const TokenId> response, TokenId eos_id) {
    std::vector<TokenId> truncated;
    for (const TokenId t : response) {
        if (t == eos_id) break;
        truncated.push_back(t);
    }
    return truncated == instance.answer;
}

std::vector<TokenId> padded_answer(const TaskInstance& instance, int gen_len, TokenId eos_id) {
    if (static_cast<int>(instance.answer.size()) > gen_len)
        throw ConfigError("answer of length " + std::to_string(instance.answer.size()) +
                          " does not fit gen_len " + std::to_string(gen_len));
    std::vector<TokenId> out = instance.answer;
    out.resize(static_cast<std::size_t>(gen_len), eos_id);
    return out;
}

}  // namespace rrd::tasks
