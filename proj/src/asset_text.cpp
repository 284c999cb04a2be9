#include <openssl/evp.h>

#include <array>
#include <stdexcept>

#include "lams/assets.hpp"

namespace lams::assets {

namespace {
std::string_view chomp(std::string_view s) noexcept {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}
}  // namespace

std::string_view mode_switch_prefix() noexcept { return chomp(mode_switch_prefix_file()); }
std::string_view rule_generation_prefix() noexcept { return chomp(rule_generation_prefix_file()); }
std::string_view rule_section_preamble() noexcept { return chomp(rule_section_preamble_file()); }

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

}  // namespace lams::assets
