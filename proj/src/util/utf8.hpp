// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tunlm {

inline constexpr uint32_t kReplacementChar = 0xFFFD;

// Decodes the codepoint starting at byte offset `i` and advances `i` past it.
// Malformed sequences decode as U+FFFD and advance one byte.
uint32_t next_codepoint(std::string_view text, size_t& i);

std::vector<uint32_t> decode_utf8(std::string_view text);

void append_utf8(std::string& out, uint32_t cp);
std::string encode_utf8(const std::vector<uint32_t>& cps);

}  // namespace tunlm
