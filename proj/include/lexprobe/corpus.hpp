#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/error.hpp"

namespace lexprobe {

/// Inclusive token range of the target word.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const noexcept { return end - start + 1; }
    friend bool operator==(const Span&, const Span&) = default;
};

/// One annotated usage of a target word. label is 1 for metaphorical, 0 for literal.
struct Instance {
    std::string id;
    std::vector<std::string> tokens;
    Span target;
    std::string lemma;
    int label = 0;
    std::optional<std::string> pos;

    friend bool operator==(const Instance&, const Instance&) = default;
};

struct Corpus {
    std::vector<Instance> instances;
    std::string split_name;

    std::size_t size() const noexcept { return instances.size(); }
    bool empty() const noexcept { return instances.empty(); }
    friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct DatasetStats {
    std::size_t n_samples = 0;
    std::size_t n_metaphorical = 0;
    std::size_t n_lemmas = 0;
    double met_pct = 0.0;
    /// Set when the corpus was empty and met_pct is reported as 0.
    bool empty_warning = false;
};

struct ParseOptions {
    /// When set, instances with a different `pos` tag are dropped.
    std::optional<std::string> pos_filter;
};

inline std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Throws ValidationError when `inst` breaks an Instance invariant.
inline void validate_instance(const Instance& inst) {
    if (inst.id.empty()) throw ValidationError("instance id is empty");
    if (inst.tokens.empty()) throw ValidationError("instance '" + inst.id + "' has no tokens");
    if (inst.target.start > inst.target.end || inst.target.end >= inst.tokens.size()) {
        throw ValidationError("instance '" + inst.id + "': target span (" +
                              std::to_string(inst.target.start) + "," +
                              std::to_string(inst.target.end) + ") out of bounds for " +
                              std::to_string(inst.tokens.size()) + " tokens");
    }
    if (inst.lemma.empty()) throw ValidationError("instance '" + inst.id + "' has an empty lemma");
    if (inst.lemma != to_lower_ascii(inst.lemma)) {
        throw ValidationError("instance '" + inst.id + "': lemma '" + inst.lemma +
                              "' is not lowercase");
    }
    if (inst.label != 0 && inst.label != 1) {
        throw ValidationError("instance '" + inst.id + "': label must be 0 or 1");
    }
}

namespace detail {

inline std::size_t json_index(const nlohmann::json& obj, const char* key, std::size_t line_no) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line_no, std::string("missing key '") + key + "'");
    if (!it->is_number_integer()) {
        throw ParseError(line_no, std::string("key '") + key + "' must be an integer");
    }
    const auto value = it->get<long long>();
    if (value < 0) throw ParseError(line_no, std::string("key '") + key + "' is negative");
    return static_cast<std::size_t>(value);
}

inline std::string json_string(const nlohmann::json& obj, const char* key, std::size_t line_no) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line_no, std::string("missing key '") + key + "'");
    if (!it->is_string()) throw ParseError(line_no, std::string("key '") + key + "' must be a string");
    return it->get<std::string>();
}

inline bool blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace detail

/// Parses one JSONL corpus line. Span and label problems raise ValidationError;
/// structural problems raise ParseError.
inline Instance parse_instance(std::string_view line, std::size_t line_no = 1) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");

    Instance inst;
    inst.id = detail::json_string(obj, "id", line_no);
    const auto tokens = obj.find("tokens");
    if (tokens == obj.end() || !tokens->is_array()) {
        throw ParseError(line_no, "key 'tokens' must be an array of strings");
    }
    inst.tokens.reserve(tokens->size());
    for (const auto& tok : *tokens) {
        if (!tok.is_string()) throw ParseError(line_no, "key 'tokens' must be an array of strings");
        inst.tokens.push_back(tok.get<std::string>());
    }
    inst.target.start = detail::json_index(obj, "target_start", line_no);
    inst.target.end = detail::json_index(obj, "target_end", line_no);
    inst.lemma = to_lower_ascii(detail::json_string(obj, "lemma", line_no));
    const auto label = obj.find("label");
    if (label == obj.end() || !label->is_number_integer()) {
        throw ParseError(line_no, "key 'label' must be 0 or 1");
    }
    inst.label = label->get<int>();
    if (const auto pos = obj.find("pos"); pos != obj.end() && !pos->is_null()) {
        if (!pos->is_string()) throw ParseError(line_no, "key 'pos' must be a string");
        inst.pos = pos->get<std::string>();
    }
    try {
        validate_instance(inst);
    } catch (const ValidationError& e) {
        throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    return inst;
}

inline Corpus parse_corpus(std::istream& in, std::string split_name, const ParseOptions& opts = {}) {
    Corpus corpus;
    corpus.split_name = std::move(split_name);
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        Instance inst = parse_instance(line, line_no);
        if (!seen.insert(inst.id).second) throw DuplicateIdError(inst.id);
        if (opts.pos_filter && inst.pos && *inst.pos != *opts.pos_filter) continue;
        corpus.instances.push_back(std::move(inst));
    }
    return corpus;
}

inline nlohmann::json to_json(const Instance& inst) {
    nlohmann::json obj = {
        {"id", inst.id},
        {"tokens", inst.tokens},
        {"target_start", inst.target.start},
        {"target_end", inst.target.end},
        {"lemma", inst.lemma},
        {"label", inst.label},
    };
    if (inst.pos) obj["pos"] = *inst.pos;
    return obj;
}

inline std::string serialize_instance(const Instance& inst) { return to_json(inst).dump(); }

inline void write_corpus(std::ostream& out, std::span<const Instance> instances) {
    for (const auto& inst : instances) out << serialize_instance(inst) << '\n';
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
    write_corpus(out, std::span<const Instance>(corpus.instances));
}

inline Corpus read_corpus_file(const std::filesystem::path& path, std::string split_name,
                               const ParseOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus file " + path.string());
    return parse_corpus(in, std::move(split_name), opts);
}

inline void write_corpus_file(const std::filesystem::path& path, std::span<const Instance> instances) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    write_corpus(out, instances);
}

inline DatasetStats corpus_stats(std::span<const Instance> instances) {
    DatasetStats stats;
    std::unordered_set<std::string_view> lemmas;
    for (const auto& inst : instances) {
        ++stats.n_samples;
        stats.n_metaphorical += inst.label == 1 ? 1 : 0;
        lemmas.insert(inst.lemma);
    }
    stats.n_lemmas = lemmas.size();
    if (stats.n_samples == 0) {
        stats.empty_warning = true;
    } else {
        stats.met_pct = static_cast<double>(stats.n_metaphorical) / static_cast<double>(stats.n_samples);
    }
    return stats;
}

inline DatasetStats corpus_stats(const Corpus& corpus) {
    return corpus_stats(std::span<const Instance>(corpus.instances));
}

}  // namespace lexprobe
