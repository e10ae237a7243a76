// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kronlora {

/// `key = value` text configuration. Blank lines and `#` comments are ignored;
/// keys may carry a dotted prefix (`task1.seed`). Every accessor records the
/// key as consumed so unknown keys can be reported afterwards.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig from_map(std::map<std::string, std::string> values);

    bool has(std::string_view key) const;

    std::string get_string(std::string_view key, std::optional<std::string> fallback = std::nullopt) const;
    double get_double(std::string_view key, std::optional<double> fallback = std::nullopt) const;
    std::uint64_t get_uint(std::string_view key, std::optional<std::uint64_t> fallback = std::nullopt) const;
    bool get_bool(std::string_view key, std::optional<bool> fallback = std::nullopt) const;
    std::vector<std::string> get_list(std::string_view key, std::vector<std::string> fallback) const;

    /// Value of `prefix.key` when present, otherwise of `key`.
    std::string scoped_key(std::string_view prefix, std::string_view key) const;

    /// Throws ConfigError listing keys no accessor has touched.
    void reject_unknown_keys() const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    const std::string* find(std::string_view key) const;
    [[noreturn]] void fail(std::string_view key, const std::string& what) const;

    std::string source_;
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;
    mutable std::set<std::string, std::less<>> consumed_;
};

} // namespace kronlora
