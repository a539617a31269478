#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "narrative_infill/error.hpp"

namespace narrative_infill::model {

enum class Variant { xe, v_infill, v_infill_r };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::xe: return "XE";
    case Variant::v_infill: return "V-Infill";
    case Variant::v_infill_r: return "V-InfillR";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  std::string k;
  for (char c : s) {
    if (c != '-' && c != '_') k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (k == "xe") return Variant::xe;
  if (k == "vinfill") return Variant::v_infill;
  if (k == "vinfillr") return Variant::v_infill_r;
  throw InputError("unknown variant '" + s + "' (expected XE, V-Infill or V-InfillR)");
}

struct ModelConfig {
  std::size_t d_img = 2048;
  std::size_t encoder_hidden = 256;
  std::size_t decoder_hidden = 512;
  std::size_t embed_dim = 512;
  std::size_t vocab_size = 0;
  std::size_t max_steps = 5;
  std::size_t max_words = 40;
  double dropout = 0.2;
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 10.0;
  double init_scale = 0.08;
  std::size_t beam = 3;
  Variant variant = Variant::xe;
  std::size_t epochs = 30;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  // Replaces the schedule's mask count for every epoch when set.
  std::optional<std::size_t> force_mask_count;

  std::size_t global_dim() const { return 2 * encoder_hidden; }

  // Throws InputError on invalid settings; returns non-fatal warnings.
  std::vector<std::string> validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw InputError(std::string("config: ") + name + " must be > 0");
    };
    positive(d_img, "d_img");
    positive(encoder_hidden, "encoder_hidden");
    positive(decoder_hidden, "decoder_hidden");
    positive(embed_dim, "embed_dim");
    positive(vocab_size, "vocab_size");
    positive(max_steps, "max_steps");
    positive(max_words, "max_words");
    positive(beam, "beam");
    positive(batch_size, "batch_size");
    if (dropout < 0.0 || dropout >= 1.0) throw InputError("config: dropout must be in [0, 1)");
    if (lr <= 0.0 || clip <= 0.0) throw InputError("config: lr and clip must be > 0");
    std::vector<std::string> warnings;
    if (force_mask_count && *force_mask_count > 2) {
      warnings.push_back("masking more than 2 local features per narrative degrades generation quality");
    }
    return warnings;
  }
};

// Run-level settings around a ModelConfig, read from the same flat file.
struct TrainConfig {
  ModelConfig model;
  std::string corpus;
  std::string out_dir = "run";
  std::size_t min_freq = 1;
  std::size_t max_vocab = 50000;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
};

// Flat "key = value" lines; '#' starts a comment. Unknown keys are errors.
inline TrainConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  TrainConfig c;
  auto& m = c.model;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw InputError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    auto as_size = [&]() -> std::size_t {
      try {
        std::size_t pos = 0;
        const auto v = std::stoull(value, &pos);
        if (pos != value.size() || value.front() == '-') throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw InputError(where() + key + " expects a non-negative integer, got '" + value + "'");
      }
    };
    auto as_double = [&]() -> double {
      try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw InputError(where() + key + " expects a number, got '" + value + "'");
      }
    };
    if (key == "d_img") m.d_img = as_size();
    else if (key == "encoder_hidden") m.encoder_hidden = as_size();
    else if (key == "decoder_hidden") m.decoder_hidden = as_size();
    else if (key == "embed_dim") m.embed_dim = as_size();
    else if (key == "max_steps") m.max_steps = as_size();
    else if (key == "max_words") m.max_words = as_size();
    else if (key == "dropout") m.dropout = as_double();
    else if (key == "lr") m.lr = as_double();
    else if (key == "beta1") m.beta1 = as_double();
    else if (key == "beta2") m.beta2 = as_double();
    else if (key == "eps") m.eps = as_double();
    else if (key == "clip") m.clip = as_double();
    else if (key == "init_scale") m.init_scale = as_double();
    else if (key == "beam") m.beam = as_size();
    else if (key == "variant") m.variant = parse_variant(value);
    else if (key == "epochs") m.epochs = as_size();
    else if (key == "batch_size") m.batch_size = as_size();
    else if (key == "seed") m.seed = as_size();
    else if (key == "force_mask_count") m.force_mask_count = as_size();
    else if (key == "corpus") c.corpus = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "min_freq") c.min_freq = as_size();
    else if (key == "max_vocab") c.max_vocab = as_size();
    else if (key == "train_ratio") c.train_ratio = as_double();
    else if (key == "val_ratio") c.val_ratio = as_double();
    else if (key == "test_ratio") c.test_ratio = as_double();
    else throw InputError(where() + "unknown key '" + key + "'");
  }
  return c;
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

inline std::string format_config(const TrainConfig& c) {
  const auto& m = c.model;
  std::ostringstream out;
  out.precision(17);
  out << "corpus = " << c.corpus << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "min_freq = " << c.min_freq << '\n'
      << "max_vocab = " << c.max_vocab << '\n'
      << "train_ratio = " << c.train_ratio << '\n'
      << "val_ratio = " << c.val_ratio << '\n'
      << "test_ratio = " << c.test_ratio << '\n'
      << "d_img = " << m.d_img << '\n'
      << "encoder_hidden = " << m.encoder_hidden << '\n'
      << "decoder_hidden = " << m.decoder_hidden << '\n'
      << "embed_dim = " << m.embed_dim << '\n'
      << "max_steps = " << m.max_steps << '\n'
      << "max_words = " << m.max_words << '\n'
      << "dropout = " << m.dropout << '\n'
      << "lr = " << m.lr << '\n'
      << "beta1 = " << m.beta1 << '\n'
      << "beta2 = " << m.beta2 << '\n'
      << "eps = " << m.eps << '\n'
      << "clip = " << m.clip << '\n'
      << "init_scale = " << m.init_scale << '\n'
      << "beam = " << m.beam << '\n'
      << "variant = " << to_string(m.variant) << '\n'
      << "epochs = " << m.epochs << '\n'
      << "batch_size = " << m.batch_size << '\n'
      << "seed = " << m.seed << '\n';
  if (m.force_mask_count) out << "force_mask_count = " << *m.force_mask_count << '\n';
  return out.str();
}

}  // namespace narrative_infill::model
