#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vitderm/errors.hpp"

namespace vitderm {

// Flat key=value file; '#' starts a comment, blank lines are ignored.
std::map<std::string, std::string> parse_keyvalue_file(const std::string& path);

// Layered option store with precedence CLI > file > default. Each resolved
// key remembers where its value came from for the run manifest.
class RunConfig {
public:
    void set_default(const std::string& key, const std::string& value);
    void apply_file(const std::string& path);
    void apply_cli(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;
    std::string get(const std::string& key) const;
    std::string source(const std::string& key) const;  // default | file | cli

    double get_double(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;  // true/false/1/0

    std::vector<std::pair<std::string, std::string>> resolved() const;

private:
    struct Entry {
        std::string value;
        std::string source;
    };
    std::map<std::string, Entry> entries_;
};

// Writes the run manifest: tool version, timestamps, inputs/outputs and the
// resolved configuration with provenance.
void write_run_manifest(const std::string& path, const std::string& subcommand,
                        const RunConfig& config,
                        const std::vector<std::pair<std::string, std::string>>& io_entries,
                        const std::string& started_at, const std::string& finished_at);

std::string tool_version();
std::string timestamp_now();

} // namespace vitderm
