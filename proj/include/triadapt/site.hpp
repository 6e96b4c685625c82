// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <compare>
#include <string>
#include <string_view>

namespace triadapt {

/// Matrix role inside a transformer block, plus `dense` for plain MLP layers.
/// Declaration order is the canonical column order of rank tables.
enum class Role { q, k, v, a, m, o, dense };

inline constexpr std::array<Role, 7> kAllRoles = {Role::q, Role::k, Role::v, Role::a,
                                                  Role::m, Role::o, Role::dense};
inline constexpr std::array<Role, 6> kAttentionRoles = {Role::q, Role::k, Role::v,
                                                        Role::a, Role::m, Role::o};

std::string_view role_name(Role role) noexcept;
/// Throws ConfigError on unknown names.
Role parse_role(std::string_view name);

/// One adapted weight matrix, identified by layer index and role.
/// Ordering is (layer, role), which is also the tie-break order for growth.
struct SiteId {
    int layer = 0;
    Role role = Role::dense;

    auto operator<=>(const SiteId&) const = default;
};

/// "L<layer>.<role>", e.g. "L0.q".
std::string to_string(const SiteId& id);
SiteId parse_site_id(std::string_view text);

}  // namespace triadapt
