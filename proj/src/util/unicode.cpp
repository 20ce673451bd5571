// SPDX-License-Identifier: Apache-2.0
#include "util/unicode.hpp"

#include <algorithm>
#include <array>

namespace tunlm {
namespace {

struct Range {
  uint32_t lo, hi;  // inclusive
};

bool in_ranges(uint32_t cp, const Range* ranges, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (cp >= ranges[i].lo && cp <= ranges[i].hi) return true;
  }
  return false;
}

// Unicode P* for ASCII/Latin-1/General Punctuation plus Arabic punctuation,
// CJK and fullwidth forms commonly pasted into social-media text.
constexpr Range kPunct[] = {
    {0x21, 0x23},    // ! " #
    {0x25, 0x2A},    // % & ' ( ) *
    {0x2C, 0x2F},    // , - . /
    {0x3A, 0x3B},    // : ;
    {0x3F, 0x40},    // ? @
    {0x5B, 0x5D},    // [ \ ]
    {0x5F, 0x5F},    // _
    {0x7B, 0x7B},    // {
    {0x7D, 0x7D},    // }
    {0xA1, 0xA1},    // inverted exclamation
    {0xA7, 0xA7},    // section sign
    {0xAB, 0xAB},    // left guillemet
    {0xB6, 0xB7},    // pilcrow, middle dot
    {0xBB, 0xBB},    // right guillemet
    {0xBF, 0xBF},    // inverted question mark
    {0x060C, 0x060D},  // Arabic comma, date separator
    {0x061B, 0x061B},  // Arabic semicolon
    {0x061E, 0x061F},  // Arabic triple dot, question mark
    {0x066A, 0x066D},  // Arabic percent, decimal, thousands, five pointed star
    {0x06D4, 0x06D4},  // Arabic full stop
    {0x2010, 0x2027},  // hyphens, dashes, quotes, daggers, bullet, ellipsis
    {0x2030, 0x205E},  // per mille .. vertical four dots
    {0x2E00, 0x2E52},  // supplemental punctuation
    {0x3001, 0x3003},  // ideographic comma, full stop, ditto
    {0x3008, 0x3011},  // CJK brackets
    {0x3014, 0x301F},  // CJK brackets and quotes
    {0xFD3E, 0xFD3F},  // ornate parentheses
    {0xFE50, 0xFE52},  // small comma forms
    {0xFE54, 0xFE57},  // small semicolon/colon/question/exclamation
    {0xFF01, 0xFF03},  // fullwidth ! " #
    {0xFF05, 0xFF0A},  // fullwidth % & ' ( ) *
    {0xFF0C, 0xFF0F},  // fullwidth , - . /
    {0xFF1A, 0xFF1B},  // fullwidth : ;
    {0xFF1F, 0xFF20},  // fullwidth ? @
    {0xFF3B, 0xFF3D},  // fullwidth [ \ ]
    {0xFF5B, 0xFF5B},  // fullwidth {
    {0xFF5D, 0xFF5D},  // fullwidth }
};

constexpr Range kEmoji[] = {
    {0x1F300, 0x1F5FF},  // Miscellaneous Symbols and Pictographs
    {0x1F600, 0x1F64F},  // Emoticons
    {0x1F680, 0x1F6FF},  // Transport and Map Symbols
    {0x1F900, 0x1F9FF},  // Supplemental Symbols and Pictographs
    {0x2700, 0x27BF},    // Dingbats
};

constexpr Range kArabicBlocks[] = {
    {0x0600, 0x06FF}, {0x0750, 0x077F}, {0x08A0, 0x08FF},
    {0xFB50, 0xFDFF}, {0xFE70, 0xFEFF},
};

// Letters of other scripts; anything matching these rejects a sentence in the
// script filter. Unlisted exotic scripts pass through unclassified.
constexpr Range kForeignLetters[] = {
    {0x41, 0x5A},      // A-Z
    {0x61, 0x7A},      // a-z
    {0xC0, 0xD6},      // Latin-1 letters
    {0xD8, 0xF6},
    {0xF8, 0x24F},     // Latin-1 tail, Latin Extended-A/B
    {0x250, 0x2AF},    // IPA extensions
    {0x370, 0x3FF},    // Greek
    {0x400, 0x52F},    // Cyrillic
    {0x531, 0x58F},    // Armenian
    {0x5D0, 0x5EA},    // Hebrew letters
    {0x5EF, 0x5F2},    // Hebrew triple yod etc.
    {0x900, 0x97F},    // Devanagari
    {0x3041, 0x30FF},  // Hiragana, Katakana
    {0x1100, 0x11FF},  // Hangul Jamo
    {0x4E00, 0x9FFF},  // CJK unified ideographs
    {0xAC00, 0xD7AF},  // Hangul syllables
};

// Non-letter codepoints inside the Arabic blocks: signs, digits, punctuation,
// combining marks, tatweel.
constexpr Range kArabicNonLetter[] = {
    {0x0600, 0x0605},  // number signs
    {0x060C, 0x060D}, {0x060E, 0x060F},  // punctuation, ornate signs
    {0x0610, 0x061A},  // honorific combining marks
    {0x061B, 0x061F},
    {0x0640, 0x0640},  // tatweel
    {0x064B, 0x065F},  // harakat
    {0x0660, 0x0669},  // Arabic-Indic digits
    {0x066A, 0x066D},
    {0x0670, 0x0670},  // superscript alef
    {0x06D4, 0x06D4},
    {0x06D6, 0x06DD},  // Quranic annotation marks
    {0x06DF, 0x06E4}, {0x06E7, 0x06E8}, {0x06EA, 0x06ED},
    {0x06F0, 0x06F9},  // extended Arabic-Indic digits
};

}  // namespace

bool is_whitespace_cp(uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_punctuation_cp(uint32_t cp) {
  return in_ranges(cp, kPunct, std::size(kPunct));
}

bool is_emoji_cp(uint32_t cp) {
  return in_ranges(cp, kEmoji, std::size(kEmoji));
}

bool is_arabic_block_cp(uint32_t cp) {
  return in_ranges(cp, kArabicBlocks, std::size(kArabicBlocks));
}

bool is_arabic_letter_cp(uint32_t cp) {
  return is_arabic_block_cp(cp) &&
         !in_ranges(cp, kArabicNonLetter, std::size(kArabicNonLetter));
}

bool is_foreign_letter_cp(uint32_t cp) {
  return in_ranges(cp, kForeignLetters, std::size(kForeignLetters));
}

bool is_digit_cp(uint32_t cp) {
  return (cp >= '0' && cp <= '9') || (cp >= 0x0660 && cp <= 0x0669) ||
         (cp >= 0x06F0 && cp <= 0x06F9);
}

bool is_arabic_diacritic_cp(uint32_t cp) {
  return (cp >= 0x064B && cp <= 0x065F) || cp == 0x0670;
}

bool is_sentence_terminal_cp(uint32_t cp) {
  return cp == '.' || cp == '!' || cp == '?' || cp == 0x061F /* ؟ */ ||
         cp == 0x06D4 /* ۔ */ || cp == 0x2026 /* … */;
}

}  // namespace tunlm
