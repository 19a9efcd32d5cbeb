#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lexprobe/error.hpp"
#include "lexprobe/random.hpp"
#include "lexprobe/split_builder.hpp"

namespace lexprobe {

inline constexpr const char* kWorkDirEnv = "LEXPROBE_WORK_DIR";

/// How the core reaches the model runner: `command` is a shell prefix to
/// which `<action> --config <file> --in <file> --out <path>` is appended.
struct RunnerDescriptor {
    std::string command;
    std::chrono::seconds timeout{std::chrono::hours(48)};
    std::size_t parallelism = 1;
    std::string base_model = "roberta-base";
};

struct PipelineConfig {
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path freq;  // optional
    std::filesystem::path work_dir = "work";
    std::optional<std::string> pos_filter;

    std::size_t min_freq_heldout = kHeldOutMinFreq;
    std::size_t min_freq_exposed = kExposedMinFreq;
    std::size_t n_heldout = kHeldOutPerLemma;
    std::size_t n_exposed = kExposedPerLemma;
    std::uint64_t seed = 42;
    std::string mask_token = std::string(kDefaultMaskToken);

    std::size_t k = 10;
    double l2 = 1.0;
    std::size_t probe_max_iter = 10000;
    double probe_tol = 1e-6;
    /// "filtered" or "standard": the train slice embedded as k-NN reference space.
    std::string reference_space = "filtered";

    RunnerDescriptor runner;
    std::uint64_t model_seed = 42;
    std::vector<std::uint64_t> sweep_seeds;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

inline std::string unquote(const std::string& value) {
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
        return value.substr(1, value.size() - 2);
    }
    return value;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        if (!value.empty() && value.front() == '-') throw std::invalid_argument(value);
        const auto v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected a nonnegative integer, got '" + value + "'");
    }
}

inline double to_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const auto v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

inline std::vector<std::uint64_t> to_unsigned_list(const std::string& key, std::string value) {
    if (!value.empty() && value.front() == '[') value.erase(0, 1);
    if (!value.empty() && value.back() == ']') value.pop_back();
    std::vector<std::uint64_t> out;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_unsigned(key, item));
    }
    return out;
}

}  // namespace detail

/// Sets one key. Unknown keys are rejected.
inline void apply_config_value(PipelineConfig& cfg, const std::string& key, const std::string& raw) {
    const std::string value = detail::unquote(detail::trim(raw));
    if (key == "train") {
        cfg.train = value;
    } else if (key == "test") {
        cfg.test = value;
    } else if (key == "freq") {
        cfg.freq = value;
    } else if (key == "work_dir") {
        cfg.work_dir = value;
    } else if (key == "pos_filter") {
        if (value.empty()) {
            cfg.pos_filter.reset();
        } else {
            cfg.pos_filter = value;
        }
    } else if (key == "min_freq_heldout") {
        cfg.min_freq_heldout = detail::to_unsigned(key, value);
    } else if (key == "min_freq_exposed") {
        cfg.min_freq_exposed = detail::to_unsigned(key, value);
    } else if (key == "n_heldout") {
        cfg.n_heldout = detail::to_unsigned(key, value);
    } else if (key == "n_exposed") {
        cfg.n_exposed = detail::to_unsigned(key, value);
    } else if (key == "seed") {
        cfg.seed = detail::to_unsigned(key, value);
    } else if (key == "mask_token") {
        cfg.mask_token = value;
    } else if (key == "k") {
        cfg.k = detail::to_unsigned(key, value);
    } else if (key == "l2") {
        cfg.l2 = detail::to_real(key, value);
    } else if (key == "probe_max_iter") {
        cfg.probe_max_iter = detail::to_unsigned(key, value);
    } else if (key == "probe_tol") {
        cfg.probe_tol = detail::to_real(key, value);
    } else if (key == "reference_space") {
        cfg.reference_space = value;
    } else if (key == "runner_command") {
        cfg.runner.command = value;
    } else if (key == "runner_timeout") {
        cfg.runner.timeout = std::chrono::seconds(detail::to_unsigned(key, value));
    } else if (key == "runner_parallelism") {
        cfg.runner.parallelism = detail::to_unsigned(key, value);
    } else if (key == "base_model") {
        cfg.runner.base_model = value;
    } else if (key == "model_seed") {
        cfg.model_seed = detail::to_unsigned(key, value);
    } else if (key == "sweep_seeds") {
        cfg.sweep_seeds = detail::to_unsigned_list(key, value);
    } else {
        throw ValidationError("unknown config key '" + key + "'");
    }
}

/// `key = value` lines; `#` starts a comment; `[section]` headers are ignored.
/// Relative paths are resolved against `base_dir`.
inline PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
    PipelineConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool quoted = false;
        char quote = 0;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == quote) quoted = false;
            } else if (c == '"' || c == '\'') {
                quoted = true;
                quote = c;
            } else if (c == '#') {
                line.resize(i);
                break;
            }
        }
        const auto text = detail::trim(line);
        if (text.empty() || text.front() == '[') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
        apply_config_value(cfg, detail::trim(text.substr(0, eq)), text.substr(eq + 1));
    }
    if (!base_dir.empty()) {
        for (auto* p : {&cfg.train, &cfg.test, &cfg.freq, &cfg.work_dir}) {
            if (!p->empty() && p->is_relative()) *p = base_dir / *p;
        }
    }
    return cfg;
}

inline PipelineConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path.string());
    return parse_config(in, path.parent_path());
}

/// Applies the work-dir environment override, if set.
inline void apply_environment(PipelineConfig& cfg) {
    if (const char* dir = std::getenv(kWorkDirEnv); dir && *dir) cfg.work_dir = dir;
}

/// Checks values and that input files exist; throws ValidationError.
inline void validate_config(const PipelineConfig& cfg, bool need_corpora = true) {
    namespace fs = std::filesystem;
    if (need_corpora) {
        if (cfg.train.empty()) throw ValidationError("config: 'train' corpus path is required");
        if (cfg.test.empty()) throw ValidationError("config: 'test' corpus path is required");
        if (!fs::is_regular_file(cfg.train)) throw ValidationError("config: train corpus not found: " + cfg.train.string());
        if (!fs::is_regular_file(cfg.test)) throw ValidationError("config: test corpus not found: " + cfg.test.string());
    }
    if (!cfg.freq.empty() && !fs::is_regular_file(cfg.freq)) {
        throw ValidationError("config: frequency file not found: " + cfg.freq.string());
    }
    if (cfg.seed == 0) throw ValidationError("config: seed must be positive");
    if (cfg.k == 0) throw ValidationError("config: k must be positive");
    if (cfg.min_freq_heldout == 0 || cfg.min_freq_exposed == 0) throw ValidationError("config: min frequencies must be >= 1");
    if (cfg.n_heldout == 0 || cfg.n_exposed == 0) throw ValidationError("config: per-lemma counts must be positive");
    if (cfg.mask_token.empty()) throw ValidationError("config: mask_token is empty");
    if (!(cfg.l2 >= 0.0)) throw ValidationError("config: l2 must be nonnegative");
    if (cfg.reference_space != "filtered" && cfg.reference_space != "standard") {
        throw ValidationError("config: reference_space must be 'filtered' or 'standard'");
    }
    if (cfg.runner.parallelism == 0) throw ValidationError("config: runner_parallelism must be positive");
}

/// Split parameters in a fixed textual form (input identity excluded).
inline std::string split_parameters(const PipelineConfig& cfg) {
    std::ostringstream ss;
    ss << "min_freq_heldout=" << cfg.min_freq_heldout << ";min_freq_exposed=" << cfg.min_freq_exposed
       << ";n_heldout=" << cfg.n_heldout << ";n_exposed=" << cfg.n_exposed << ";seed=" << cfg.seed
       << ";mask_token=" << cfg.mask_token << ";pos_filter=" << cfg.pos_filter.value_or("");
    return ss.str();
}

inline std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, value >>= 4) out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    return out;
}

inline std::uint64_t file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::uint64_t h = fnv1a64({});
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

}  // namespace lexprobe
