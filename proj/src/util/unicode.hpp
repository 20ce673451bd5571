// SPDX-License-Identifier: Apache-2.0
//
// Codepoint classification used by the corpus pipeline and answer
// normalization. Tables are curated range lists covering the character
// classes that occur in Arabic-dialect web text; they are the single source
// of truth for "punctuation", "emoji" and "Arabic script" in this project.
#pragma once

#include <cstdint>

namespace tunlm {

bool is_whitespace_cp(uint32_t cp);

// Unicode P* general categories for the blocks relevant to web text, plus the
// Arabic-specific punctuation marks.
bool is_punctuation_cp(uint32_t cp);

// Emoji blocks stripped by the corpus cleaner: Emoticons, Miscellaneous
// Symbols and Pictographs, Supplemental Symbols and Pictographs, Transport
// and Map Symbols, Dingbats.
bool is_emoji_cp(uint32_t cp);

// Accepted Arabic blocks: U+0600-06FF, U+0750-077F, U+08A0-08FF, U+FB50-FDFF,
// U+FE70-FEFF.
bool is_arabic_block_cp(uint32_t cp);

// A letter within the Arabic blocks (excludes digits, punctuation, signs and
// combining marks that share those blocks).
bool is_arabic_letter_cp(uint32_t cp);

// A letter of a known non-Arabic script (Latin, Greek, Cyrillic, Hebrew, CJK,
// ...). Used to reject mixed-script sentences.
bool is_foreign_letter_cp(uint32_t cp);

// ASCII digits, Arabic-Indic digits and extended Arabic-Indic digits.
bool is_digit_cp(uint32_t cp);

// Arabic diacritics (harakat) U+064B-065F and superscript alef U+0670.
bool is_arabic_diacritic_cp(uint32_t cp);

// Sentence-final punctuation the segmenter splits on.
bool is_sentence_terminal_cp(uint32_t cp);

}  // namespace tunlm
