#pragma once

// Prompt texts compiled in from assets/prompts. The *_file() accessors return
// the exact file bytes (hashed in tests); the plain accessors drop the
// trailing newline for prompt assembly.

#include <string>
#include <string_view>

namespace lams::assets {

std::string_view mode_switch_prefix_file() noexcept;
std::string_view rule_generation_prefix_file() noexcept;
std::string_view rule_section_preamble_file() noexcept;

std::string_view mode_switch_prefix() noexcept;
std::string_view rule_generation_prefix() noexcept;
std::string_view rule_section_preamble() noexcept;

/// The session service's endpoint and frame documentation (JSON).
std::string_view api_schema() noexcept;

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace lams::assets
