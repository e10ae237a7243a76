// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
    KeyValueConfig cfg;
    cfg.source_ = source;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value', got '" + body + "'");
        }
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
        }
        if (cfg.values_.count(key) != 0) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        cfg.lines_[key] = line_no;
        cfg.values_[std::move(key)] = std::move(value);
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    return parse(in, path.string());
}

KeyValueConfig KeyValueConfig::from_map(std::map<std::string, std::string> values) {
    KeyValueConfig cfg;
    cfg.source_ = "<map>";
    cfg.values_ = std::move(values);
    return cfg;
}

bool KeyValueConfig::has(std::string_view key) const {
    return values_.find(std::string(key)) != values_.end();
}

const std::string* KeyValueConfig::find(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) {
        return nullptr;
    }
    consumed_.insert(it->first);
    return &it->second;
}

void KeyValueConfig::fail(std::string_view key, const std::string& what) const {
    std::string where = source_;
    const auto line = lines_.find(std::string(key));
    if (line != lines_.end()) {
        where += ":" + std::to_string(line->second);
    }
    throw ConfigError(where + ": key '" + std::string(key) + "': " + what);
}

std::string KeyValueConfig::get_string(std::string_view key, std::optional<std::string> fallback) const {
    if (const std::string* v = find(key)) {
        return *v;
    }
    if (!fallback) {
        fail(key, "required but missing");
    }
    return *fallback;
}

double KeyValueConfig::get_double(std::string_view key, std::optional<double> fallback) const {
    const std::string* v = find(key);
    if (v == nullptr) {
        if (!fallback) {
            fail(key, "required but missing");
        }
        return *fallback;
    }
    std::istringstream ss(*v);
    double out = 0.0;
    ss >> out;
    if (!ss || !ss.eof()) {
        fail(key, "expected a number, got '" + *v + "'");
    }
    return out;
}

std::uint64_t KeyValueConfig::get_uint(std::string_view key, std::optional<std::uint64_t> fallback) const {
    const std::string* v = find(key);
    if (v == nullptr) {
        if (!fallback) {
            fail(key, "required but missing");
        }
        return *fallback;
    }
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
        fail(key, "expected a non-negative integer, got '" + *v + "'");
    }
    return out;
}

bool KeyValueConfig::get_bool(std::string_view key, std::optional<bool> fallback) const {
    const std::string* v = find(key);
    if (v == nullptr) {
        if (!fallback) {
            fail(key, "required but missing");
        }
        return *fallback;
    }
    const std::string s = lower(*v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") {
        return true;
    }
    if (s == "false" || s == "0" || s == "no" || s == "off") {
        return false;
    }
    fail(key, "expected a boolean, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(std::string_view key, std::vector<std::string> fallback) const {
    const std::string* v = find(key);
    if (v == nullptr) {
        return fallback;
    }
    std::vector<std::string> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    if (out.empty()) {
        fail(key, "expected a comma-separated list");
    }
    return out;
}

std::string KeyValueConfig::scoped_key(std::string_view prefix, std::string_view key) const {
    std::string scoped = std::string(prefix) + "." + std::string(key);
    return has(scoped) ? scoped : std::string(key);
}

void KeyValueConfig::reject_unknown_keys() const {
    std::string unknown;
    for (const auto& [key, value] : values_) {
        if (consumed_.count(key) == 0) {
            unknown += (unknown.empty() ? "" : ", ") + key;
        }
    }
    if (!unknown.empty()) {
        throw ConfigError(source_ + ": unknown key(s): " + unknown);
    }
}

} // namespace kronlora
