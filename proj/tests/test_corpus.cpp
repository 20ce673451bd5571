// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "corpus.hpp"
#include "support/testutil.hpp"
#include "util/rng.hpp"
#include "util/unicode.hpp"
#include "util/utf8.hpp"

using namespace tunlm;

TEST_CASE("clean_text removes links, emoji and punctuation") {
  CHECK(clean_text("") == "");
  CHECK(clean_text("شاهد http://x.co الآن!") == "شاهد الآن");
  CHECK(clean_text("جيد 👍👍") == "جيد");
  CHECK(clean_text("زوروا www.mithal.tn اليوم") == "زوروا اليوم");
  CHECK(clean_text("  واحد\t\tاثنان  ") == "واحد اثنان");
  CHECK(clean_text("قال: «نعم»، أكيد.") == "قال نعم أكيد");
  CHECK(clean_text("🙂🚀✈") == "");
}

TEST_CASE("clean_text is idempotent") {
  Rng rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::string raw;
    const uint32_t len = rng.uniform_u32(40);
    for (uint32_t i = 0; i < len; ++i) {
      switch (rng.uniform_u32(6)) {
        case 0: append_utf8(raw, 0x0621 + rng.uniform_u32(40)); break;   // Arabic
        case 1: append_utf8(raw, 'a' + rng.uniform_u32(26)); break;      // Latin
        case 2: append_utf8(raw, 0x1F600 + rng.uniform_u32(40)); break;  // emoji
        case 3: raw += rng.uniform_u32(2) ? "." : "!"; break;
        case 4: raw += rng.uniform_u32(2) ? " " : "\t"; break;
        default: raw += "http://x.co"; break;
      }
    }
    const std::string once = clean_text(raw);
    CHECK(clean_text(once) == once);
  }
}

TEST_CASE("filter_arabic accepts Arabic-only and rejects mixed script") {
  CHECK_FALSE(filter_arabic("hello"));
  CHECK(filter_arabic("محلاها هالغناية"));
  CHECK_FALSE(filter_arabic("ok محلاها"));
  CHECK(filter_arabic("عام 2024 كان"));     // digits permitted
  CHECK(filter_arabic("٣ كتب"));             // Arabic-Indic digits permitted
  CHECK_FALSE(filter_arabic(""));
  CHECK_FALSE(filter_arabic("123"));          // needs at least one Arabic letter
  CHECK_FALSE(filter_arabic("кот قال"));     // Cyrillic rejected
}

TEST_CASE("segment_sentences splits on newlines and terminal punctuation") {
  CHECK(segment_sentences("").empty());
  CHECK(segment_sentences("س1\nس2") == std::vector<std::string>{"س1", "س2"});
  CHECK(segment_sentences("س1. س2") == std::vector<std::string>{"س1", "س2"});
  CHECK(segment_sentences("وين؟ هنا") == std::vector<std::string>{"وين", "هنا"});
  CHECK(segment_sentences("تم!! تمام") == std::vector<std::string>{"تم", "تمام"});
  // Dots inside a URL token do not split.
  CHECK(segment_sentences("شوف www.x.co الآن") ==
        std::vector<std::string>{"شوف www.x.co الآن"});
  CHECK(segment_sentences("آخر جملة.") == std::vector<std::string>{"آخر جملة"});
}

TEST_CASE("pipeline emits only clean Arabic sentences") {
  const std::vector<RawDocument> docs = {
      {"d1", "محلاها هالغناية! see http://x.co 👍\nالجو باهي اليوم."},
      {"d2", "hello world\nوقتاه يبدا الماتش؟ تونس 123."},
  };
  const Corpus corpus = build_corpus(docs);
  REQUIRE(corpus.documents.size() == 2);
  for (const auto& doc : corpus.documents) {
    for (const std::string& sentence : doc) {
      CAPTURE(sentence);
      CHECK(filter_arabic(sentence));
      CHECK(clean_text(sentence) == sentence);
    }
  }
  CHECK(corpus.documents[0] ==
        std::vector<std::string>{"محلاها هالغناية", "الجو باهي اليوم"});
  CHECK(corpus.documents[1] == std::vector<std::string>{"وقتاه يبدا الماتش", "تونس 123"});
}

TEST_CASE("pipeline closure holds on random unicode strings") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const uint32_t len = rng.uniform_u32(60);
    for (uint32_t i = 0; i < len; ++i) {
      const uint32_t pick = rng.uniform_u32(8);
      if (pick < 3) {
        append_utf8(text, 0x0621 + rng.uniform_u32(42));
      } else if (pick == 3) {
        append_utf8(text, 0x20 + rng.uniform_u32(0x5F));
      } else if (pick == 4) {
        append_utf8(text, 0x1F300 + rng.uniform_u32(0x2FF));
      } else if (pick == 5) {
        append_utf8(text, 0x0400 + rng.uniform_u32(0xFF));
      } else if (pick == 6) {
        text += " ";
      } else {
        append_utf8(text, rng.uniform_u32(0x3000) + 1);
      }
    }
    for (const std::string& sentence : pipeline_document(text)) {
      CAPTURE(text, sentence);
      REQUIRE(filter_arabic(sentence));
      // No codepoint of a removed class survives.
      for (uint32_t cp : decode_utf8(sentence)) {
        REQUIRE_FALSE(is_emoji_cp(cp));
        REQUIRE_FALSE(is_punctuation_cp(cp));
      }
      REQUIRE(sentence.find("http://") == std::string::npos);
      REQUIRE(sentence.find("www.") == std::string::npos);
    }
  }
}

TEST_CASE("corpus_stats counts sentences, words and unique words") {
  CHECK(corpus_stats(Corpus{}).sentence_count == 0);
  CHECK(corpus_stats(Corpus{}).word_count == 0);
  CHECK(corpus_stats(Corpus{}).unique_word_count == 0);

  Corpus corpus;
  corpus.documents = {{"ا ب"}, {"ا ج"}};
  const CorpusStats stats = corpus_stats(corpus);
  CHECK(stats.sentence_count == 2);
  CHECK(stats.word_count == 4);
  CHECK(stats.unique_word_count == 3);
}

TEST_CASE("corpus file round trip preserves statistics") {
  const auto dir = test::scratch_dir("corpus_roundtrip");
  Corpus corpus;
  corpus.documents = {{"محلاها هالغناية", "الجو باهي"}, {"وقتاه يبدا الماتش"}};
  save_corpus(corpus, dir / "c.txt");
  const Corpus loaded = load_corpus(dir / "c.txt");
  CHECK(loaded.documents == corpus.documents);
  const CorpusStats a = corpus_stats(corpus);
  const CorpusStats b = corpus_stats(loaded);
  CHECK(a.sentence_count == b.sentence_count);
  CHECK(a.word_count == b.word_count);
  CHECK(a.unique_word_count == b.unique_word_count);
}

TEST_CASE("jsonl document loading validates ids and fields") {
  const auto dir = test::scratch_dir("corpus_jsonl");
  {
    std::ofstream out(dir / "docs.jsonl");
    out << R"({"id": "a", "text": "سطر واحد"})" << "\n";
    out << R"({"id": "b", "text": "سطر ثاني"})" << "\n";
  }
  const auto docs = load_jsonl_documents(dir / "docs.jsonl");
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "a");

  {
    std::ofstream out(dir / "dup.jsonl");
    out << R"({"id": "a", "text": "س"})" << "\n";
    out << R"({"id": "a", "text": "س"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_jsonl_documents(dir / "dup.jsonl"),
                       doctest::Contains("duplicate document id"), std::runtime_error);

  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"text": "س"})" << "\n";
  }
  CHECK_THROWS_AS(load_jsonl_documents(dir / "bad.jsonl"), std::runtime_error);
}
