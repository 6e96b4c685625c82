// SPDX-License-Identifier: Apache-2.0
#include "triadapt/site.hpp"

#include <charconv>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

std::string_view role_name(Role role) noexcept {
    switch (role) {
        case Role::q: return "q";
        case Role::k: return "k";
        case Role::v: return "v";
        case Role::a: return "a";
        case Role::m: return "m";
        case Role::o: return "o";
        case Role::dense: return "dense";
    }
    return "?";
}

Role parse_role(std::string_view name) {
    for (Role r : kAllRoles) {
        if (role_name(r) == name) return r;
    }
    throw ConfigError(fmt::format("unknown matrix role '{}'", name));
}

std::string to_string(const SiteId& id) { return fmt::format("L{}.{}", id.layer, role_name(id.role)); }

SiteId parse_site_id(std::string_view text) {
    const auto dot = text.find('.');
    if (text.size() < 4 || text.front() != 'L' || dot == std::string_view::npos) {
        throw ConfigError(fmt::format("malformed site id '{}'", text));
    }
    SiteId id;
    const auto digits = text.substr(1, dot - 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.layer);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || id.layer < 0) {
        throw ConfigError(fmt::format("malformed site id '{}'", text));
    }
    id.role = parse_role(text.substr(dot + 1));
    return id;
}

}  // namespace triadapt
