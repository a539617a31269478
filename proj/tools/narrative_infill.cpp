// Command-line driver: stats, synth, train, generate, evaluate, gradcheck.
//
// Exit codes: 0 success, 2 input error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "narrative_infill/corpus/corpus.hpp"
#include "narrative_infill/corpus/encode.hpp"
#include "narrative_infill/corpus/split.hpp"
#include "narrative_infill/corpus/stats.hpp"
#include "narrative_infill/corpus/vocabulary.hpp"
#include "narrative_infill/error.hpp"
#include "narrative_infill/infer/generate.hpp"
#include "narrative_infill/metrics/evaluate.hpp"
#include "narrative_infill/model/config.hpp"
#include "narrative_infill/model/trainer.hpp"
#include "narrative_infill/nn/checkpoint.hpp"
#include "narrative_infill/run/gradcheck_suite.hpp"
#include "narrative_infill/run/manifest.hpp"
#include "narrative_infill/run/threads.hpp"
#include "narrative_infill/synth/synthetic_corpus.hpp"

namespace fs = std::filesystem;
namespace ni = narrative_infill;

namespace {

using Real = float;

// Output stream that is stdout unless a path is given.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ni::InputError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

int cmd_stats(const std::string& corpus_path, const std::string& out) {
  const auto corpus = ni::corpus::load_corpus(corpus_path);
  if (corpus.empty()) throw ni::InputError("corpus " + corpus_path + " is empty");
  Output o(out);
  o.stream() << ni::corpus::to_json(ni::corpus::corpus_stats(corpus)).dump(2) << '\n';
  return 0;
}

int cmd_synth(const ni::synth::SynthOptions& options, const std::string& out) {
  if (out.empty()) throw ni::InputError("synth: --out is required");
  const auto corpus = ni::synth::generate_corpus(options);
  ni::corpus::save_corpus(out, corpus);
  std::cerr << "wrote " << corpus.size() << " narratives to " << out << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& corpus_override, const std::string& out_override) {
  auto config = ni::model::load_config(config_path);
  if (seed) config.model.seed = *seed;
  if (!corpus_override.empty()) config.corpus = corpus_override;
  if (!out_override.empty()) config.out_dir = out_override;
  if (config.corpus.empty()) throw ni::InputError("train: no corpus given (config key 'corpus' or --corpus)");

  const auto corpus = ni::corpus::load_corpus(config.corpus);
  if (corpus.empty()) throw ni::InputError("corpus " + config.corpus + " is empty");
  const auto split = ni::corpus::split_corpus(
      corpus, {config.train_ratio, config.val_ratio, config.test_ratio}, config.model.seed);
  if (split.train.empty()) throw ni::InputError("train: training split is empty");

  const auto vocab = ni::corpus::build_vocabulary(split.train, config.min_freq, config.max_vocab);
  config.model.vocab_size = vocab.size();
  config.model.d_img = corpus.front().feature_dim();
  for (const auto& w : config.model.validate()) std::cerr << "warning: " << w << '\n';

  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  vocab.save(dir / "vocab.txt");
  ni::corpus::save_corpus(dir / "train.jsonl", split.train);
  ni::corpus::save_corpus(dir / "val.jsonl", split.val);
  ni::corpus::save_corpus(dir / "test.jsonl", split.test);
  {
    std::ofstream cfg(dir / "config.txt");
    cfg << ni::model::format_config(config);
  }

  const auto& mc = config.model;
  const auto train_enc = ni::corpus::encode_corpus(split.train, vocab, mc.max_steps, mc.max_words);
  const auto val_enc = ni::corpus::encode_corpus(split.val, vocab, mc.max_steps, mc.max_words);

  std::ofstream log(dir / "train_log.jsonl");
  log << nlohmann::json{{"header",
                         {{"variant", ni::model::to_string(mc.variant)},
                          {"val_mask", "none"},
                          {"n_train", train_enc.size()},
                          {"n_val", val_enc.size()},
                          {"vocab_size", vocab.size()}}}}
             .dump()
      << '\n';
  ni::model::TrainOptions options;
  options.threads = ni::run::thread_budget();
  options.on_epoch = [&](const ni::model::EpochLog& e) {
    log << ni::model::to_json(e).dump() << '\n';
    log.flush();
    std::cerr << "epoch " << e.epoch << " train_loss " << e.train_loss;
    if (e.val_loss) std::cerr << " val_loss " << *e.val_loss;
    std::cerr << " mask_count " << e.mask_count << '\n';
  };
  const auto result = ni::model::train<Real>(train_enc, val_enc, mc, options);
  log.close();
  ni::nn::save_checkpoint(dir / "checkpoint.nick", result.best_params, result.best_optimizer);

  ni::run::RunManifest manifest;
  manifest.config = ni::model::format_config(config);
  manifest.seed = mc.seed;
  manifest.corpus_path = config.corpus;
  manifest.corpus_checksum = ni::run::file_checksum(config.corpus);
  for (const auto& [role, file] : {std::pair{"vocab", "vocab.txt"}, {"checkpoint", "checkpoint.nick"},
                                   {"log", "train_log.jsonl"}, {"config", "config.txt"},
                                   {"train_split", "train.jsonl"}, {"val_split", "val.jsonl"},
                                   {"test_split", "test.jsonl"}}) {
    manifest.add_artifact(role, dir, file);
  }
  ni::run::save_manifest(dir / "manifest.json", manifest);
  std::cerr << "best epoch "
            << (result.best_epoch ? std::to_string(*result.best_epoch) : std::string("none (no epochs)"))
            << ", checkpoint " << (dir / "checkpoint.nick").string() << '\n';
  return 0;
}

int cmd_generate(const std::string& checkpoint_path, const std::string& corpus_path,
                 const std::string& config_path, std::optional<std::size_t> infill_index, bool sweep,
                 const std::string& out, std::optional<std::size_t> beam_override) {
  if (checkpoint_path.empty() || corpus_path.empty()) {
    throw ni::InputError("generate: --checkpoint and --corpus are required");
  }
  if (infill_index && sweep) throw ni::InputError("generate: --infill-index and --sweep are exclusive");
  const fs::path ck_path = checkpoint_path;
  const auto checkpoint = ni::nn::load_checkpoint<Real>(ck_path);
  const auto dims = ni::model::infer_dims(checkpoint.params);
  const auto vocab = ni::corpus::Vocabulary::load(ck_path.parent_path() / "vocab.txt");
  if (vocab.size() != dims.vocab_size) throw ni::InputError("vocabulary size does not match the checkpoint");

  ni::model::TrainConfig config;
  fs::path cfg_path = config_path.empty() ? ck_path.parent_path() / "config.txt" : fs::path(config_path);
  if (fs::exists(cfg_path)) config = ni::model::load_config(cfg_path);
  const auto& mc = config.model;

  const auto corpus = ni::corpus::load_corpus(corpus_path);
  if (corpus.empty()) throw ni::InputError("corpus " + corpus_path + " is empty");
  ni::infer::GenerateOptions options;
  options.beam = beam_override.value_or(mc.beam);
  options.max_len = mc.max_words + 2;

  const auto threads = ni::run::thread_budget();
  std::vector<ni::corpus::EncodedNarrative> encoded;
  for (const auto& n : corpus) {
    if (n.feature_dim() != dims.d_img) {
      throw ni::InputError("narrative " + n.id + ": feature dimension does not match the checkpoint");
    }
    encoded.push_back(ni::corpus::encode_narrative(n, vocab, mc.max_steps, mc.max_words));
    if (infill_index && *infill_index >= encoded.back().n_steps) {
      throw ni::InputError("--infill-index " + std::to_string(*infill_index) + " is out of range for narrative " +
                           n.id + " with " + std::to_string(encoded.back().n_steps) + " steps");
    }
  }
  std::vector<std::vector<ni::infer::GeneratedNarrative>> results(encoded.size());
  ni::run::parallel_for(encoded.size(), threads, [&](std::size_t i) {
    const auto features = ni::model::feature_matrix<Real>(encoded[i]);
    if (sweep) {
      results[i] = ni::infer::infill_sweep(checkpoint.params, features, options, encoded[i].id);
    } else {
      results[i].push_back(
          ni::infer::generate_narrative(checkpoint.params, features, options, infill_index, encoded[i].id));
    }
  });
  Output o(out);
  for (const auto& per_narrative : results) {
    for (const auto& g : per_narrative) o.stream() << ni::infer::to_json(g, vocab).dump() << '\n';
  }
  return 0;
}

int cmd_evaluate(const std::string& generations_path, const std::string& corpus_path, bool per_step,
                 const std::string& out) {
  if (corpus_path.empty()) throw ni::InputError("evaluate: --corpus is required");
  const auto generations = ni::metrics::load_generations(generations_path);
  const auto references = ni::corpus::load_corpus(corpus_path);
  const auto report = ni::metrics::evaluate_run(
      generations, references, per_step ? ni::metrics::ScoringUnit::step : ni::metrics::ScoringUnit::narrative);
  Output o(out);
  o.stream() << ni::metrics::to_json(report).dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const auto cases = ni::run::run_gradient_suite(seed);
  bool ok = true;
  std::cout << std::left << std::setw(34) << "case" << std::setw(14) << "max_rel_err" << std::setw(12)
            << "tolerance" << "result\n";
  for (const auto& c : cases) {
    std::cout << std::left << std::setw(34) << c.name << std::setw(14) << std::scientific << std::setprecision(3)
              << c.max_relative_error << std::setw(12) << c.tolerance << (c.passed() ? "pass" : "FAIL") << '\n';
    ok = ok && c.passed();
  }
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual narrative infilling: train, generate and evaluate"};
  app.require_subcommand(1);

  std::string corpus_path, out, config_path, checkpoint_path, generations_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> infill_index, beam;
  bool sweep = false, per_step = false;
  ni::synth::SynthOptions synth;

  auto* stats = app.add_subcommand("stats", "Corpus statistics as JSON");
  stats->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
  stats->add_option("--out", out, "Output file (default stdout)");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->add_option("--out", out, "Output corpus JSONL")->required();
  synth_cmd->add_option("--narratives", synth.n_narratives)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--steps", synth.n_steps)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--vocab", synth.vocab_size)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.d_img)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--overlap", synth.overlap, "Fraction of step words shared across the narrative")
      ->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--min-words", synth.min_words)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-words", synth.max_words)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.noise)->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config_path, "Flat key = value config")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--corpus", corpus_path, "Override the config corpus");
  train->add_option("--out", out, "Override the output directory");

  auto* generate = app.add_subcommand("generate", "Beam-search generation, optionally with infilling");
  generate->add_option("--checkpoint", checkpoint_path)->required();
  generate->add_option("--corpus", corpus_path)->required();
  generate->add_option("--config", config_path, "Defaults to config.txt next to the checkpoint");
  generate->add_option("--infill-index", infill_index, "Zero this step's features before encoding");
  generate->add_flag("--sweep", sweep, "Unmasked generation plus one per infill index");
  generate->add_option("--beam", beam, "Override the configured beam size")->check(CLI::PositiveNumber);
  generate->add_option("--out", out, "Output JSONL (default stdout)");

  auto* evaluate = app.add_subcommand("evaluate", "Score generations against reference narratives");
  evaluate->add_option("generations", generations_path, "Generations JSONL")->required();
  evaluate->add_option("--corpus", corpus_path, "Reference corpus JSONL")->required();
  evaluate->add_flag("--per-step", per_step, "Score each step as its own pair");
  evaluate->add_option("--out", out, "Output file (default stdout)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient self-check");
  gradcheck->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*stats) return cmd_stats(corpus_path, out);
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*train) return cmd_train(config_path, seed, corpus_path, out);
    if (*generate) return cmd_generate(checkpoint_path, corpus_path, config_path, infill_index, sweep, out, beam);
    if (*evaluate) return cmd_evaluate(generations_path, corpus_path, per_step, out);
    if (*gradcheck) return cmd_gradcheck(seed.value_or(7));
  } catch (const ni::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ni::ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ni::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
