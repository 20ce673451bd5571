// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

#include "datasets.hpp"
#include "run_config.hpp"
#include "support/testutil.hpp"

using namespace tunlm;
using nlohmann::json;

namespace {

// A QA file shaped like the task datasets: documents -> 3 paragraphs -> 3
// question/answer pairs each.
void write_qa_fixture(const std::filesystem::path& path, int documents, bool break_offset = false) {
  json root;
  root["data"] = json::array();
  const std::string context = "دار نور كبيرة وفيها مكتبة قديمة";
  for (int d = 0; d < documents; ++d) {
    json document;
    document["title"] = "doc" + std::to_string(d);
    document["paragraphs"] = json::array();
    for (int p = 0; p < 3; ++p) {
      json paragraph;
      paragraph["context"] = context;
      paragraph["qas"] = json::array();
      for (int q = 0; q < 3; ++q) {
        json qa;
        qa["id"] = "d" + std::to_string(d) + "p" + std::to_string(p) + "q" + std::to_string(q);
        qa["question"] = "وين المكتبة؟";
        int32_t start = 4;  // "نور"
        if (break_offset && d == 0 && p == 0 && q == 0) start = 5;
        qa["answers"] = json::array({{{"text", "نور"}, {"answer_start", start}}});
        paragraph["qas"].push_back(qa);
      }
      document["paragraphs"].push_back(paragraph);
    }
    root["data"].push_back(document);
  }
  std::ofstream out(path);
  out << root.dump(2);
}

}  // namespace

TEST_CASE("classification loader accepts names and indices, rejects junk") {
  const auto dir = test::scratch_dir("datasets_cls");
  {
    std::ofstream out(dir / "train.jsonl");
    out << R"({"text": "باهي برشة", "label": "positive"})" << "\n";
    out << R"({"text": "خايب", "label": 0})" << "\n";
  }
  const auto dataset =
      load_classification_dataset(dir / "train.jsonl", {"negative", "positive"});
  REQUIRE(dataset.examples.size() == 2);
  CHECK(dataset.examples[0].label == 1);
  CHECK(dataset.examples[1].label == 0);

  {
    std::ofstream out(dir / "bad_label.jsonl");
    out << R"({"text": "س", "label": "positive"})" << "\n";
    out << R"({"text": "س", "label": "meh"})" << "\n";
  }
  CHECK_THROWS_WITH(load_classification_dataset(dir / "bad_label.jsonl", {"negative", "positive"}),
                    doctest::Contains("unknown label 'meh' at line 2"));

  {
    std::ofstream out(dir / "empty.jsonl");
  }
  CHECK_THROWS_WITH(load_classification_dataset(dir / "empty.jsonl", {"negative", "positive"}),
                    doctest::Contains("empty dataset"));

  {
    std::ofstream out(dir / "missing.jsonl");
    out << R"({"text": "س"})" << "\n";
  }
  CHECK_THROWS_WITH(load_classification_dataset(dir / "missing.jsonl", {"negative", "positive"}),
                    doctest::Contains("line 1"));
}

TEST_CASE("QA loader counts the fixture shape and validates offsets") {
  const auto dir = test::scratch_dir("datasets_qa");
  write_qa_fixture(dir / "qa.json", 2);
  const QaDataset dataset = load_qa_dataset(dir / "qa.json");
  // 2 documents x 3 paragraphs x 3 QA pairs.
  CHECK(dataset.document_count == 2);
  CHECK(dataset.paragraph_count == 6);
  CHECK(dataset.examples.size() == 18);
  CHECK(dataset.examples.front().answers.front().text == "نور");

  write_qa_fixture(dir / "broken.json", 1, /*break_offset=*/true);
  CHECK_THROWS_WITH(load_qa_dataset(dir / "broken.json"),
                    doctest::Contains("answer offset mismatch for qa id 'd0p0q0'"));

  {
    std::ofstream out(dir / "empty.json");
    out << R"({"data": []})";
  }
  CHECK_THROWS_WITH(load_qa_dataset(dir / "empty.json"), doctest::Contains("empty dataset"));
}

TEST_CASE("split_dataset sizes, determinism and exact partition") {
  std::vector<int> examples;
  for (int i = 0; i < 10; ++i) examples.push_back(i);
  const auto [train10, test10] = split_dataset(examples, 0.8, 7);
  CHECK(train10.size() == 8);
  CHECK(test10.size() == 2);

  // Same seed, same split; the partition is exact.
  const auto [train_again, test_again] = split_dataset(examples, 0.8, 7);
  CHECK(train10 == train_again);
  CHECK(test10 == test_again);
  std::multiset<int> joined(train10.begin(), train10.end());
  joined.insert(test10.begin(), test10.end());
  CHECK(joined == std::multiset<int>(examples.begin(), examples.end()));

  // TSAC-sized arithmetic: 7452 -> 5962/1490.
  std::vector<int> tsac(7452);
  const auto [tsac_train, tsac_test] = split_dataset(tsac, 0.8, 1);
  CHECK(tsac_train.size() == 5962);
  CHECK(tsac_test.size() == 1490);

  CHECK_THROWS(split_dataset(std::vector<int>{1}, 0.8, 1));
}

TEST_CASE("run config defaults, sections and unknown-key rejection") {
  const auto dir = test::scratch_dir("run_config");
  {
    std::ofstream out(dir / "config.json");
    out << R"({
      "corpus": {"format": "text"},
      "tokenizer": {"vocab_size": 500, "min_frequency": 1},
      "model": {"profile": "tiny", "vocab_size": 600},
      "train": {"total_steps": 50, "seed": 9, "checkpoint_dir": "ckpts",
                "mask_prob": 0.2, "mask_mode": "bert_80_10_10", "next_ratio": 0.4},
      "eval": {"label_set": ["a", "b"], "max_answer_len": 10}
    })";
  }
  const RunConfig config = load_run_config(dir / "config.json");
  CHECK(config.corpus_format == "text");
  CHECK(config.vocab_size == 500);
  CHECK(config.min_frequency == 1);
  CHECK(config.model.num_layers == 2);    // tiny profile
  CHECK(config.model.vocab_size == 600);  // explicit key overrides the profile
  CHECK(config.train.total_steps == 50);
  CHECK(config.train.seed == 9);
  // checkpoint_dir resolves relative to the config file.
  CHECK(std::filesystem::path(config.train.checkpoint_dir).is_absolute());
  CHECK(config.train.checkpoint_dir.ends_with("ckpts"));
  CHECK(config.mask_prob == 0.2);
  CHECK(config.mask_mode == MaskMode::kBert801010);
  CHECK(config.next_ratio == 0.4);
  CHECK(config.label_set == std::vector<std::string>{"a", "b"});
  CHECK(config.max_answer_len == 10);

  {
    std::ofstream out(dir / "unknown.json");
    out << R"({"train": {"learning_rat": 0.1}})";
  }
  CHECK_THROWS_WITH(load_run_config(dir / "unknown.json"),
                    doctest::Contains("unknown config key: train.learning_rat"));
  {
    std::ofstream out(dir / "unknown_section.json");
    out << R"({"training": {}})";
  }
  CHECK_THROWS_WITH(load_run_config(dir / "unknown_section.json"),
                    doctest::Contains("unknown config key: training"));

  // Overrides take precedence over the file.
  const RunConfig merged = make_run_config(RunConfig{}, (dir / "config.json").c_str(),
                                           R"({"train": {"total_steps": 99}})");
  CHECK(merged.train.total_steps == 99);
  CHECK(merged.train.seed == 9);

  // Defaults match the documented values.
  const RunConfig defaults;
  CHECK(defaults.train.learning_rate == 1e-4);
  CHECK(defaults.train.batch_size == 128);
  CHECK(defaults.train.max_seq_len == 128);
  CHECK(defaults.train.warmup_ratio == 0.01);
  CHECK(defaults.mask_prob == 0.15);
  CHECK(defaults.mask_mode == MaskMode::kPaperLiteral);
  CHECK(defaults.vocab_size == 30000);
  CHECK(defaults.model.num_layers == 12);
  CHECK(defaults.model.hidden_size == 768);
  CHECK(defaults.model.num_heads == 12);
  CHECK(defaults.model.intermediate_size == 4 * 768);
}
