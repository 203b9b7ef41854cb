#include "vitderm/runconfig.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

namespace vitderm {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

std::map<std::string, std::string> parse_keyvalue_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        out[key] = value;
    }
    return out;
}

void RunConfig::set_default(const std::string& key, const std::string& value) {
    entries_[key] = {value, "default"};
}

void RunConfig::apply_file(const std::string& path) {
    for (const auto& [key, value] : parse_keyvalue_file(path)) {
        auto it = entries_.find(key);
        if (it == entries_.end())
            throw ConfigError("unknown config key '" + key + "' in " + path);
        it->second = {value, "file"};
    }
}

void RunConfig::apply_cli(const std::string& key, const std::string& value) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = {value, "cli"};
}

bool RunConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string RunConfig::get(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.value;
}

std::string RunConfig::source(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second.source;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get(key);
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

int64_t RunConfig::get_int(const std::string& key) const {
    const std::string v = get(key);
    try {
        size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [key, e] : entries_) out.push_back({key, e.value});
    return out;
}

void write_run_manifest(const std::string& path, const std::string& subcommand,
                        const RunConfig& config,
                        const std::vector<std::pair<std::string, std::string>>& io_entries,
                        const std::string& started_at, const std::string& finished_at) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write run manifest: " + path);
    out << "tool=vitderm " << tool_version() << "\n";
    out << "subcommand=" << subcommand << "\n";
    out << "started_at=" << started_at << "\n";
    out << "finished_at=" << finished_at << "\n";
    for (const auto& [key, value] : io_entries) out << key << "=" << value << "\n";
    for (const auto& [key, value] : config.resolved())
        out << "config." << key << "=" << value << "  # " << config.source(key) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::string tool_version() { return "0.1.0"; }

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

} // namespace vitderm
