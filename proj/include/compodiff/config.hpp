// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Plain-text key=value experiment configuration with [section] headers and
// '#' comments. Unknown sections or keys are rejected with the line number;
// every default is overridable.

#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "compodiff/compose.hpp"
#include "compodiff/prior.hpp"
#include "compodiff/synthdata.hpp"

namespace compodiff {

struct ExperimentConfig {
  // [data]
  std::uint64_t data_seed = 1;
  int data_size = 2000;
  int channels = 4;
  int length = 128;
  double coupling = 0.85;
  double harmonic_freq_lo = 2.0, harmonic_freq_hi = 6.0;
  double harmonic_amp_lo = 0.5, harmonic_amp_hi = 1.0;
  double harmonic_decay_lo = 0.0, harmonic_decay_hi = 1.0;
  double harmonic_cutoff = 16.0;
  double percussive_rate_lo = 2.0, percussive_rate_hi = 5.0;
  double percussive_amp_lo = 0.5, percussive_amp_hi = 1.0;
  double percussive_decay_lo = 2.0, percussive_decay_hi = 6.0;
  bool wav_export = false;

  // [model]
  std::uint64_t model_seed = 7;
  int n_latents = 2;
  int latent_len = 64;
  int enc_base = 16;
  int unet_base = 16;
  int emb_dim = 64;
  int pe_frequencies = 64;
  int groups = 4;
  bool attention = false;
  std::string op = "mean";

  // [training]
  std::uint64_t train_seed = 3;
  int epochs = 50;
  double lr = 1e-4;
  int batch = 8;
  double weight_decay = 0.01;

  // [sampling]
  int steps = 100;

  // [prior]
  std::uint64_t prior_seed = 11;
  double p_mask = 0.8;
  int prior_epochs = 50;
  double prior_lr = 1e-4;
  int prior_batch = 8;
  int prior_base = 16;

  // [evaluation]
  std::uint64_t eval_seed = 1234;
  int crops = 256;
  int workers = 0;  // 0 = hardware concurrency

  DataConfig data_config() const {
    DataConfig d;
    d.channels = channels;
    d.length = length;
    d.coupling = coupling;
    d.seed = data_seed;
    d.harmonic = SourceParams{SourceKind::kHarmonic, harmonic_freq_lo, harmonic_freq_hi,
                              harmonic_amp_lo, harmonic_amp_hi, harmonic_decay_lo,
                              harmonic_decay_hi, harmonic_cutoff, 0};
    d.percussive = SourceParams{SourceKind::kPercussive, percussive_rate_lo, percussive_rate_hi,
                                percussive_amp_lo, percussive_amp_hi, percussive_decay_lo,
                                percussive_decay_hi, 0.0, 0};
    return d;
  }

  DecompositionConfig decomposition_config() const {
    DecompositionConfig c;
    c.channels = channels;
    c.length = length;
    c.n_latents = n_latents;
    c.latent_len = latent_len;
    c.enc_base = enc_base;
    c.unet_base = unet_base;
    c.emb_dim = emb_dim;
    c.pe_frequencies = pe_frequencies;
    c.groups = groups;
    c.attention = attention;
    c.op = composition_operator_from(op);
    c.seed = model_seed;
    return c;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.epochs = epochs;
    t.lr = lr;
    t.batch = batch;
    t.seed = train_seed;
    t.weight_decay = weight_decay;
    return t;
  }

  PriorConfig prior_config() const {
    PriorConfig p;
    p.n_latents = n_latents;
    p.latent_len = latent_len;
    p.base_channels = prior_base;
    p.emb_dim = emb_dim;
    p.pe_frequencies = pe_frequencies;
    p.groups = groups;
    p.attention = attention;
    p.p_mask = p_mask;
    p.seed = prior_seed;
    return p;
  }

  TrainConfig prior_train_config() const {
    TrainConfig t;
    t.epochs = prior_epochs;
    t.lr = prior_lr;
    t.batch = prior_batch;
    t.seed = prior_seed;
    t.weight_decay = weight_decay;
    return t;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const std::map<std::string, std::map<std::string, Field>>& config_schema() {
  static const auto* schema = [] {
    auto* m = new std::map<std::string, std::map<std::string, Field>>();
    auto as_int = [](const std::string& v) {
      std::size_t used = 0;
      const int x = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument("not an integer");
      return x;
    };
    auto as_u64 = [](const std::string& v) {
      std::size_t used = 0;
      const unsigned long long x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("not an integer");
      return static_cast<std::uint64_t>(x);
    };
    auto as_double = [](const std::string& v) {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("not a number");
      return x;
    };
    auto as_bool = [](const std::string& v) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw std::invalid_argument("not a boolean (use true/false)");
    };
#define FIELD_INT(section, key, member)                                               \
  (*m)[section][key] = Field{                                                         \
      [as_int](ExperimentConfig& c, const std::string& v) { c.member = as_int(v); },  \
      [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_U64(section, key, member)                                               \
  (*m)[section][key] = Field{                                                         \
      [as_u64](ExperimentConfig& c, const std::string& v) { c.member = as_u64(v); },  \
      [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define FIELD_DBL(section, key, member)                                                     \
  (*m)[section][key] = Field{                                                               \
      [as_double](ExperimentConfig& c, const std::string& v) { c.member = as_double(v); },  \
      [](const ExperimentConfig& c) { return fmt_double(c.member); }}
#define FIELD_BOOL(section, key, member)                                                \
  (*m)[section][key] = Field{                                                           \
      [as_bool](ExperimentConfig& c, const std::string& v) { c.member = as_bool(v); },  \
      [](const ExperimentConfig& c) { return c.member ? "true" : "false"; }}

    FIELD_U64("data", "seed", data_seed);
    FIELD_INT("data", "size", data_size);
    FIELD_INT("data", "channels", channels);
    FIELD_INT("data", "length", length);
    FIELD_DBL("data", "coupling", coupling);
    FIELD_DBL("data", "harmonic_freq_lo", harmonic_freq_lo);
    FIELD_DBL("data", "harmonic_freq_hi", harmonic_freq_hi);
    FIELD_DBL("data", "harmonic_amp_lo", harmonic_amp_lo);
    FIELD_DBL("data", "harmonic_amp_hi", harmonic_amp_hi);
    FIELD_DBL("data", "harmonic_decay_lo", harmonic_decay_lo);
    FIELD_DBL("data", "harmonic_decay_hi", harmonic_decay_hi);
    FIELD_DBL("data", "harmonic_cutoff", harmonic_cutoff);
    FIELD_DBL("data", "percussive_rate_lo", percussive_rate_lo);
    FIELD_DBL("data", "percussive_rate_hi", percussive_rate_hi);
    FIELD_DBL("data", "percussive_amp_lo", percussive_amp_lo);
    FIELD_DBL("data", "percussive_amp_hi", percussive_amp_hi);
    FIELD_DBL("data", "percussive_decay_lo", percussive_decay_lo);
    FIELD_DBL("data", "percussive_decay_hi", percussive_decay_hi);
    FIELD_BOOL("data", "wav_export", wav_export);

    FIELD_U64("model", "seed", model_seed);
    FIELD_INT("model", "n_latents", n_latents);
    FIELD_INT("model", "latent_len", latent_len);
    FIELD_INT("model", "enc_base", enc_base);
    FIELD_INT("model", "unet_base", unet_base);
    FIELD_INT("model", "emb_dim", emb_dim);
    FIELD_INT("model", "pe_frequencies", pe_frequencies);
    FIELD_INT("model", "groups", groups);
    FIELD_BOOL("model", "attention", attention);
    (*m)["model"]["operator"] = Field{
        [](ExperimentConfig& c, const std::string& v) {
          composition_operator_from(v);  // validates
          c.op = v;
        },
        [](const ExperimentConfig& c) { return c.op; }};

    FIELD_U64("training", "seed", train_seed);
    FIELD_INT("training", "epochs", epochs);
    FIELD_DBL("training", "lr", lr);
    FIELD_INT("training", "batch", batch);
    FIELD_DBL("training", "weight_decay", weight_decay);

    FIELD_INT("sampling", "steps", steps);

    FIELD_U64("prior", "seed", prior_seed);
    FIELD_DBL("prior", "p_mask", p_mask);
    FIELD_INT("prior", "epochs", prior_epochs);
    FIELD_DBL("prior", "lr", prior_lr);
    FIELD_INT("prior", "batch", prior_batch);
    FIELD_INT("prior", "base", prior_base);

    FIELD_U64("evaluation", "seed", eval_seed);
    FIELD_INT("evaluation", "crops", crops);
    FIELD_INT("evaluation", "workers", workers);
#undef FIELD_INT
#undef FIELD_U64
#undef FIELD_DBL
#undef FIELD_BOOL
    return m;
  }();
  return *schema;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config") {
  ExperimentConfig cfg;
  const auto& schema = detail::config_schema();
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw detail::ConfigError(origin + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = line.substr(1, line.size() - 2);
      if (!schema.count(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value, got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' outside any section");
    const auto& keys = schema.at(section);
    auto it = keys.find(key);
    if (it == keys.end()) fail("unknown key '" + key + "' in section [" + section + "]");
    try {
      it->second.set(cfg, value);
    } catch (const std::exception& e) {
      fail("bad value '" + value + "' for " + section + "." + key + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw detail::ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

// canonical serialization with every value materialized (seeds included)
inline std::string config_to_string(const ExperimentConfig& cfg) {
  const auto& schema = detail::config_schema();
  std::string out;
  for (const auto& [section, keys] : schema) {
    out += "[" + section + "]\n";
    for (const auto& [key, field] : keys) out += key + " = " + field.get(cfg) + "\n";
    out += "\n";
  }
  return out;
}

}  // namespace compodiff
