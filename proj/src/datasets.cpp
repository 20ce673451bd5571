// SPDX-License-Identifier: Apache-2.0
#include "datasets.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "util/utf8.hpp"

namespace tunlm {
namespace {

int32_t resolve_label(const nlohmann::json& label, const std::vector<std::string>& label_set,
                      size_t line_no) {
  if (label.is_number_integer()) {
    const auto value = label.get<int64_t>();
    if (value < 0 || value >= static_cast<int64_t>(label_set.size())) {
      throw std::runtime_error("label index " + std::to_string(value) + " out of range at line " +
                               std::to_string(line_no));
    }
    return static_cast<int32_t>(value);
  }
  if (label.is_string()) {
    const std::string name = label.get<std::string>();
    for (size_t i = 0; i < label_set.size(); ++i) {
      if (label_set[i] == name) return static_cast<int32_t>(i);
    }
    throw std::runtime_error("unknown label '" + name + "' at line " + std::to_string(line_no));
  }
  throw std::runtime_error("label must be a string or integer at line " + std::to_string(line_no));
}

}  // namespace

ClassificationDataset load_classification_dataset(const std::filesystem::path& path,
                                                  const std::vector<std::string>& label_set) {
  if (label_set.size() < 2) throw std::invalid_argument("label_set needs at least 2 labels");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());

  ClassificationDataset dataset;
  dataset.label_set = label_set;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("bad record at line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.contains("text") || !record.contains("label")) {
      throw std::runtime_error("record at line " + std::to_string(line_no) +
                               " must have fields 'text' and 'label'");
    }
    dataset.examples.push_back({record["text"].get<std::string>(),
                                resolve_label(record["label"], label_set, line_no)});
  }
  if (dataset.examples.empty()) {
    throw std::runtime_error("empty dataset: " + path.string());
  }
  return dataset;
}

QaDataset load_qa_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad QA dataset " + path.string() + ": " + e.what());
  }
  if (!root.contains("data") || !root["data"].is_array()) {
    throw std::runtime_error("QA dataset must have a top-level 'data' array");
  }

  QaDataset dataset;
  for (const auto& document : root["data"]) {
    ++dataset.document_count;
    if (!document.contains("paragraphs")) {
      throw std::runtime_error("QA document without 'paragraphs'");
    }
    for (const auto& paragraph : document["paragraphs"]) {
      ++dataset.paragraph_count;
      const std::string context = paragraph.at("context").get<std::string>();
      const std::vector<uint32_t> context_cps = decode_utf8(context);
      for (const auto& qa : paragraph.at("qas")) {
        QaExample example;
        example.id = qa.at("id").is_string() ? qa.at("id").get<std::string>() : qa.at("id").dump();
        example.question = qa.at("question").get<std::string>();
        example.context = context;
        for (const auto& answer : qa.at("answers")) {
          QaAnswer a;
          a.text = answer.at("text").get<std::string>();
          a.answer_start = answer.at("answer_start").get<int32_t>();
          const std::vector<uint32_t> answer_cps = decode_utf8(a.text);
          const bool in_bounds =
              a.answer_start >= 0 &&
              static_cast<size_t>(a.answer_start) + answer_cps.size() <= context_cps.size();
          bool matches = in_bounds;
          for (size_t k = 0; matches && k < answer_cps.size(); ++k) {
            matches = context_cps[static_cast<size_t>(a.answer_start) + k] == answer_cps[k];
          }
          if (!matches) {
            throw std::runtime_error("answer offset mismatch for qa id '" + example.id + "'");
          }
          example.answers.push_back(std::move(a));
        }
        if (example.answers.empty()) {
          throw std::runtime_error("qa id '" + example.id + "' has no answers");
        }
        dataset.examples.push_back(std::move(example));
      }
    }
  }
  if (dataset.examples.empty()) {
    throw std::runtime_error("empty dataset: " + path.string());
  }
  return dataset;
}

}  // namespace tunlm
