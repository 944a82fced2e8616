#pragma once

// Minimal structured key/value text format:
//
//   # comment
//   [section]
//   key = value
//
// Keys outside any section belong to the "" section.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bsechase/errors.hpp"

namespace bsechase {

class KeyValueConfig {
public:
    using Section = std::map<std::string, std::string>;

    static KeyValueConfig parse(std::istream& in, const std::string& origin = "<stream>") {
        KeyValueConfig cfg;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section header");
                section = trim(line.substr(1, line.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            const auto key = trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.sections_[section][key] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    static KeyValueConfig parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file", path);
        return parse(in, path);
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    const std::string& get(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        if (s == sections_.end() || !s->second.count(key))
            throw ConfigError("missing key [" + section + "] " + key);
        return s->second.at(key);
    }

    double get_double(const std::string& section, const std::string& key) const {
        return to_double(get(section, key), key);
    }
    double get_double(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }
    long long get_int(const std::string& section, const std::string& key) const {
        const auto& v = get(section, key);
        try {
            std::size_t pos = 0;
            const long long x = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": expected an integer, got '" + v + "'");
        }
    }
    long long get_int(const std::string& section, const std::string& key, long long fallback) const {
        return has(section, key) ? get_int(section, key) : fallback;
    }

    /// Whitespace- or comma-separated list of reals.
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const {
        return split_doubles(get(section, key), key);
    }

    const std::map<std::string, Section>& sections() const noexcept { return sections_; }

    static std::vector<double> split_doubles(const std::string& text, const std::string& what) {
        std::string s = text;
        for (auto& ch : s)
            if (ch == ',') ch = ' ';
        std::istringstream in(s);
        std::vector<double> out;
        std::string tok;
        while (in >> tok) out.push_back(to_double(tok, what));
        return out;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    static double to_double(const std::string& v, const std::string& key) {
        try {
            std::size_t pos = 0;
            const double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": expected a number, got '" + v + "'");
        }
    }

    std::map<std::string, Section> sections_;
};

}  // namespace bsechase
