#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "colddamp/io.hpp"

extern "C" char** environ;

// Flat sectioned key-value configs ("[section]" + "key = value", '#'/';'
// comments).  Frequencies are Hz, powers W, temperatures K at this boundary;
// angular quantities only exist inside the library.  Any key can be
// overridden from the environment: [sim] seed becomes COLDDAMP_SIM_SEED
// (section names therefore contain no underscores).
namespace colddamp {

inline constexpr const char* env_prefix = "COLDDAMP_";

class Config {
  public:
    struct Entry {
        std::string value;
        int line = 0;  // 0 when injected from the environment
        bool from_env = false;
    };

    static Config parse(std::string_view text, std::string source_name) {
        Config cfg;
        cfg.source_ = std::move(source_name);
        std::string section;
        int lineno = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t eol = std::min(text.find('\n', pos), text.size());
            std::string_view line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++lineno;
            line = trim(line);
            if (line.empty() || line.front() == '#' || line.front() == ';') continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::invalid_argument(cfg.where(lineno) + ": unterminated section header");
                section = std::string(trim(line.substr(1, line.size() - 2)));
                if (section.empty())
                    throw std::invalid_argument(cfg.where(lineno) + ": empty section name");
                if (section.find('_') != std::string::npos)
                    throw std::invalid_argument(cfg.where(lineno) +
                                                ": section names must not contain '_' (reserved for "
                                                "environment overrides)");
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos)
                throw std::invalid_argument(cfg.where(lineno) + ": expected 'key = value'");
            const std::string key(trim(line.substr(0, eq)));
            const std::string value(trim(line.substr(eq + 1)));
            if (key.empty()) throw std::invalid_argument(cfg.where(lineno) + ": empty key");
            if (section.empty())
                throw std::invalid_argument(cfg.where(lineno) + ": key '" + key +
                                            "' appears before any [section]");
            const std::string full = section + "." + key;
            if (cfg.entries_.count(full))
                throw std::invalid_argument(cfg.where(lineno) + ": duplicate key '" + full + "'");
            cfg.entries_[full] = Entry{value, lineno, false};
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& path) {
        Config cfg = parse(read_file_text(path), path.string());
        cfg.apply_env_overrides();
        return cfg;
    }

    // COLDDAMP_<SECTION>_<KEY...> -> section.key (section = first token).
    void apply_env_overrides() {
        const std::string_view prefix = env_prefix;
        for (char** e = environ; e && *e; ++e) {
            std::string_view kv(*e);
            if (kv.substr(0, prefix.size()) != prefix) continue;
            const std::size_t eq = kv.find('=');
            if (eq == std::string_view::npos) continue;
            std::string name(kv.substr(prefix.size(), eq - prefix.size()));
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char c) { return char(std::tolower(c)); });
            const std::size_t us = name.find('_');
            if (us == std::string::npos || us == 0 || us + 1 >= name.size()) continue;
            const std::string full = name.substr(0, us) + "." + name.substr(us + 1);
            entries_[full] = Entry{std::string(kv.substr(eq + 1)), 0, true};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    const std::string& source() const { return source_; }

    std::string get_string(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it == entries_.end())
            throw std::invalid_argument(source_ + ": missing required key '" + key + "'");
        touched_.insert(key);
        return it->second.value;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    double get_double(const std::string& key) const {
        return parse_number<double>(key, get_string(key));
    }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key) const {
        return parse_number<std::uint64_t>(key, get_string(key));
    }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_u64(key) : fallback;
    }

    int get_int(const std::string& key) const { return parse_number<int>(key, get_string(key)); }
    int get_int(const std::string& key, int fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string v = get_string(key);
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw std::invalid_argument(context(key) + ": expected true/false, got '" + v + "'");
    }
    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    std::vector<std::string> keys_in_section(const std::string& section) const {
        std::vector<std::string> out;
        const std::string prefix = section + ".";
        for (const auto& [k, v] : entries_)
            if (k.rfind(prefix, 0) == 0) out.push_back(k);
        return out;
    }

    // Keys never read by any getter; surfaced as likely typos.
    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_)
            if (!touched_.count(k)) out.push_back(k);
        return out;
    }

    // Effective key-value state, sorted; hashed into the manifest so two runs
    // with different environment overrides never share a config hash.
    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : entries_) {
            out += k;
            out += " = ";
            out += v.value;
            out += '\n';
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) {
        entries_[key] = Entry{value, 0, false};
    }

  private:
    static std::string_view trim(std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    }

    std::string where(int line) const { return source_ + ":" + std::to_string(line); }

    std::string context(const std::string& key) const {
        const auto it = entries_.find(key);
        if (it != entries_.end() && it->second.from_env) {
            std::string env = key;
            std::transform(env.begin(), env.end(), env.begin(),
                           [](unsigned char c) { return c == '.' ? '_' : char(std::toupper(c)); });
            return std::string(env_prefix) + env + " (environment)";
        }
        const int line = (it != entries_.end()) ? it->second.line : 0;
        return where(line) + " '" + key + "'";
    }

    template <class T>
    T parse_number(const std::string& key, const std::string& raw) const {
        T v{};
        const char* b = raw.data();
        const char* e = raw.data() + raw.size();
        const auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc{} || res.ptr != e)
            throw std::invalid_argument(context(key) + ": expected a number, got '" + raw + "'");
        return v;
    }

    std::string source_;
    std::map<std::string, Entry> entries_;
    mutable std::set<std::string> touched_;
};

}  // namespace colddamp
