// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end over the tunlm shared library. Subcommands:
// prepare-data, train-vocab, build-pretrain, pretrain, finetune, transfer,
// evaluate, stats. Exit codes: 0 success, 1 domain error, 2 usage error.
#include <tunlm/tunlm.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;

// Flags accumulate into a partial config document so that flag > config file
// > default precedence is enforced in one place.
struct Overrides {
  json doc = json::object();

  void set(const std::string& section, const std::string& key, json value) {
    doc[section][key] = std::move(value);
  }
  std::string dump() const { return doc.empty() ? std::string() : doc.dump(); }
};

struct CommonOpts {
  std::string config;
  std::optional<uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file (sections: corpus, tokenizer, model, train, eval)");
    cmd->add_option("--seed", seed, "Random seed (overrides config)");
  }
  void fold(Overrides& overrides) const {
    if (seed.has_value()) overrides.set("train", "seed", *seed);
  }
};

int fail(tunlm_status status) {
  std::cerr << "error: " << tunlm_last_error() << "\n";
  return status == TUNLM_ERR_INVALID_ARGUMENT ? 2 : 1;
}

std::string take_string(char* owned) {
  std::string out = owned != nullptr ? owned : "";
  tunlm_free(owned);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tunlm: monolingual encoder language-model toolkit for Arabic-dialect text"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // prepare-data
  auto* prepare = app.add_subcommand("prepare-data", "Clean and script-filter raw documents into a corpus file");
  std::string prepare_input, prepare_out, prepare_format, prepare_stats_out;
  CommonOpts prepare_common;
  prepare->add_option("--input", prepare_input, "JSONL file, text file or directory of .txt files")->required();
  prepare->add_option("--out", prepare_out, "Corpus file to write")->required();
  prepare->add_option("--format", prepare_format, "Input format: jsonl or text");
  prepare->add_option("--stats-out", prepare_stats_out, "Write corpus statistics JSON to this file");
  prepare_common.attach(prepare);

  // stats
  auto* stats = app.add_subcommand("stats", "Print sentence/word/unique-word counts of a corpus file");
  std::string stats_corpus;
  stats->add_option("--corpus", stats_corpus, "Corpus file")->required();

  // train-vocab
  auto* train_vocab = app.add_subcommand("train-vocab", "Train a WordPiece vocabulary on a corpus file");
  std::string tv_corpus, tv_out;
  std::optional<int32_t> tv_size, tv_min_freq;
  CommonOpts tv_common;
  train_vocab->add_option("--corpus", tv_corpus, "Corpus file")->required();
  train_vocab->add_option("--out", tv_out, "Vocab file to write")->required();
  train_vocab->add_option("--vocab-size", tv_size, "Vocabulary budget including specials");
  train_vocab->add_option("--min-frequency", tv_min_freq, "Minimum character/pair frequency");
  tv_common.attach(train_vocab);

  // build-pretrain
  auto* build = app.add_subcommand("build-pretrain", "Build the MLM+NSP pretraining dataset");
  std::string bp_corpus, bp_vocab, bp_out, bp_mask_mode;
  std::optional<int32_t> bp_max_seq;
  std::optional<double> bp_mask_prob, bp_next_ratio;
  CommonOpts bp_common;
  build->add_option("--corpus", bp_corpus, "Corpus file")->required();
  build->add_option("--vocab", bp_vocab, "Vocab file")->required();
  build->add_option("--out", bp_out, "Dataset file to write")->required();
  build->add_option("--max-seq-len", bp_max_seq, "Packed sequence length");
  build->add_option("--mask-prob", bp_mask_prob, "Masking probability");
  build->add_option("--mask-mode", bp_mask_mode, "paper_literal or bert_80_10_10");
  build->add_option("--next-ratio", bp_next_ratio, "IsNext pair fraction");
  bp_common.attach(build);

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Run MLM+NSP pretraining from scratch");
  std::string pt_data, pt_out, pt_log, pt_profile;
  std::optional<int64_t> pt_steps;
  std::optional<int32_t> pt_batch, pt_vocab_size;
  std::optional<double> pt_lr, pt_dropout;
  CommonOpts pt_common;
  pretrain->add_option("--data", pt_data, "Pretraining dataset file")->required();
  pretrain->add_option("--out", pt_out, "Checkpoint file to write")->required();
  pretrain->add_option("--log", pt_log, "JSONL training log to write");
  pretrain->add_option("--profile", pt_profile, "Model profile: base or tiny");
  pretrain->add_option("--steps", pt_steps, "Total optimization steps");
  pretrain->add_option("--batch-size", pt_batch, "Batch size");
  pretrain->add_option("--lr", pt_lr, "Peak learning rate");
  pretrain->add_option("--vocab-size", pt_vocab_size, "Model vocabulary size");
  pretrain->add_option("--dropout", pt_dropout, "Dropout probability");
  pt_common.attach(pretrain);

  // finetune
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint on a task dataset");
  std::string ft_ckpt, ft_task, ft_train, ft_dev, ft_vocab, ft_out;
  std::optional<int64_t> ft_steps;
  std::optional<int32_t> ft_batch;
  std::optional<double> ft_lr;
  CommonOpts ft_common;
  finetune->add_option("--checkpoint", ft_ckpt, "Starting checkpoint")->required();
  finetune->add_option("--task", ft_task, "classification or qa")->required();
  finetune->add_option("--train", ft_train, "Training dataset")->required();
  finetune->add_option("--dev", ft_dev, "Dev dataset (default: 80/20 split of --train)");
  finetune->add_option("--vocab", ft_vocab, "Vocab file")->required();
  finetune->add_option("--out", ft_out, "Best checkpoint to write")->required();
  finetune->add_option("--steps", ft_steps, "Total steps (default: about 3 epochs)");
  finetune->add_option("--batch-size", ft_batch, "Batch size");
  finetune->add_option("--lr", ft_lr, "Peak learning rate");
  ft_common.attach(finetune);

  // transfer
  auto* transfer = app.add_subcommand("transfer", "Sequential transfer over ordered fine-tuning stages");
  std::string tr_ckpt, tr_task, tr_stages, tr_vocab, tr_out;
  std::optional<int64_t> tr_steps;
  CommonOpts tr_common;
  transfer->add_option("--checkpoint", tr_ckpt, "Starting checkpoint")->required();
  transfer->add_option("--task", tr_task, "classification or qa")->required();
  transfer->add_option("--stages", tr_stages, "JSON file: [{\"train\": ..., \"dev\": ...}, ...]")->required();
  transfer->add_option("--vocab", tr_vocab, "Vocab file")->required();
  transfer->add_option("--out", tr_out, "Final best checkpoint to write")->required();
  transfer->add_option("--steps", tr_steps, "Steps per stage (default: about 3 epochs each)");
  tr_common.attach(transfer);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a task dataset");
  std::string ev_ckpt, ev_task, ev_data, ev_vocab, ev_predictions;
  CommonOpts ev_common;
  evaluate->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  evaluate->add_option("--task", ev_task, "classification or qa")->required();
  evaluate->add_option("--data", ev_data, "Evaluation dataset")->required();
  evaluate->add_option("--vocab", ev_vocab, "Vocab file")->required();
  evaluate->add_option("--predictions-out", ev_predictions, "Write per-example predictions JSONL");
  ev_common.attach(evaluate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  }

  if (prepare->parsed()) {
    Overrides o;
    prepare_common.fold(o);
    if (!prepare_format.empty()) o.set("corpus", "format", prepare_format);
    char* stats_json = nullptr;
    const tunlm_status status =
        tunlm_prepare_corpus(prepare_input.c_str(), prepare_common.config.c_str(),
                             o.dump().c_str(), prepare_out.c_str(), &stats_json);
    if (status != TUNLM_OK) return fail(status);
    const std::string stats_text = take_string(stats_json);
    std::cout << stats_text << "\n";
    if (!prepare_stats_out.empty()) {
      std::ofstream out(prepare_stats_out, std::ios::trunc);
      out << stats_text << "\n";
      if (!out) {
        std::cerr << "error: cannot write " << prepare_stats_out << "\n";
        return 1;
      }
    }
    return 0;
  }

  if (stats->parsed()) {
    char* stats_json = nullptr;
    const tunlm_status status = tunlm_corpus_stats(stats_corpus.c_str(), &stats_json);
    if (status != TUNLM_OK) return fail(status);
    std::cout << take_string(stats_json) << "\n";
    return 0;
  }

  if (train_vocab->parsed()) {
    Overrides o;
    tv_common.fold(o);
    if (tv_size.has_value()) o.set("tokenizer", "vocab_size", *tv_size);
    if (tv_min_freq.has_value()) o.set("tokenizer", "min_frequency", *tv_min_freq);
    const tunlm_status status = tunlm_vocab_train(tv_corpus.c_str(), tv_common.config.c_str(),
                                                  o.dump().c_str(), tv_out.c_str());
    return status == TUNLM_OK ? 0 : fail(status);
  }

  if (build->parsed()) {
    Overrides o;
    bp_common.fold(o);
    if (bp_max_seq.has_value()) o.set("train", "max_seq_len", *bp_max_seq);
    if (bp_mask_prob.has_value()) o.set("train", "mask_prob", *bp_mask_prob);
    if (!bp_mask_mode.empty()) o.set("train", "mask_mode", bp_mask_mode);
    if (bp_next_ratio.has_value()) o.set("train", "next_ratio", *bp_next_ratio);
    const tunlm_status status =
        tunlm_build_pretrain(bp_corpus.c_str(), bp_vocab.c_str(), bp_common.config.c_str(),
                             o.dump().c_str(), bp_out.c_str());
    return status == TUNLM_OK ? 0 : fail(status);
  }

  if (pretrain->parsed()) {
    Overrides o;
    pt_common.fold(o);
    if (!pt_profile.empty()) o.set("model", "profile", pt_profile);
    if (pt_steps.has_value()) o.set("train", "total_steps", *pt_steps);
    if (pt_batch.has_value()) o.set("train", "batch_size", *pt_batch);
    if (pt_lr.has_value()) o.set("train", "learning_rate", *pt_lr);
    if (pt_vocab_size.has_value()) o.set("model", "vocab_size", *pt_vocab_size);
    if (pt_dropout.has_value()) o.set("model", "dropout", *pt_dropout);
    const tunlm_status status =
        tunlm_pretrain(pt_data.c_str(), pt_common.config.c_str(), o.dump().c_str(),
                       pt_out.c_str(), pt_log.empty() ? nullptr : pt_log.c_str());
    return status == TUNLM_OK ? 0 : fail(status);
  }

  if (finetune->parsed()) {
    Overrides o;
    ft_common.fold(o);
    if (ft_steps.has_value()) o.set("train", "total_steps", *ft_steps);
    if (ft_batch.has_value()) o.set("train", "batch_size", *ft_batch);
    if (ft_lr.has_value()) o.set("train", "learning_rate", *ft_lr);
    char* report = nullptr;
    const tunlm_status status = tunlm_finetune(
        ft_ckpt.c_str(), ft_task.c_str(), ft_train.c_str(),
        ft_dev.empty() ? nullptr : ft_dev.c_str(), ft_vocab.c_str(), ft_common.config.c_str(),
        o.dump().c_str(), ft_out.c_str(), &report);
    if (status != TUNLM_OK) return fail(status);
    std::cout << take_string(report) << "\n";
    return 0;
  }

  if (transfer->parsed()) {
    Overrides o;
    tr_common.fold(o);
    if (tr_steps.has_value()) o.set("train", "total_steps", *tr_steps);
    std::string stages_doc;
    {
      std::ifstream in(tr_stages);
      if (!in) {
        std::cerr << "error: cannot open stages file " << tr_stages << "\n";
        return 1;
      }
      stages_doc.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    char* report = nullptr;
    const tunlm_status status =
        tunlm_transfer(tr_ckpt.c_str(), tr_task.c_str(), stages_doc.c_str(), tr_vocab.c_str(),
                       tr_common.config.c_str(), o.dump().c_str(), tr_out.c_str(), &report);
    if (status != TUNLM_OK) return fail(status);
    std::cout << take_string(report) << "\n";
    return 0;
  }

  if (evaluate->parsed()) {
    Overrides o;
    ev_common.fold(o);
    char* report = nullptr;
    const tunlm_status status = tunlm_evaluate(
        ev_ckpt.c_str(), ev_task.c_str(), ev_data.c_str(), ev_vocab.c_str(),
        ev_common.config.c_str(), o.dump().c_str(),
        ev_predictions.empty() ? nullptr : ev_predictions.c_str(), &report);
    if (status != TUNLM_OK) return fail(status);
    std::cout << take_string(report) << "\n";
    return 0;
  }

  std::cerr << app.help() << "\n";
  return 2;
}
