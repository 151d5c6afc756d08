#pragma once

#include <map>
#include <string>
#include <vector>

namespace eqd {

// INI-style key-value config: [section] headers, key = value lines,
// '#'/';' comments. Keys are addressed as "section.key".
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key) const;  // throws if missing
    std::string str(const std::string& key, const std::string& fallback) const;
    int integer(const std::string& key, int fallback) const;
    double real(const std::string& key, double fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    std::vector<int> int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<std::string> str_list(const std::string& key) const;

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace eqd
