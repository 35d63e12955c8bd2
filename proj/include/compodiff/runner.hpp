// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Experiment runner behind the CLI: dataset generation, decomposition
// training, operator ablation, prior training, separation/generation/
// reconstruction evaluation, and tabular reporting. Artifacts are
// reproducible byte-for-byte given the same config and seeds.

#pragma once

#include <atomic>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "compodiff/checkpoint.hpp"
#include "compodiff/compose.hpp"
#include "compodiff/config.hpp"
#include "compodiff/metrics.hpp"
#include "compodiff/prior.hpp"
#include "compodiff/synthdata.hpp"

namespace compodiff {

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace detail

// column order is part of the file contract; see the README table
struct CsvWriter {
  std::ofstream out;
  explicit CsvWriter(const std::filesystem::path& path, const std::string& header)
      : out(path) {
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << header << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  }
};

template <class Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (n <= 0) return;
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// dataset persistence (same container format as model checkpoints)

inline void save_dataset(const std::filesystem::path& path,
                         const std::vector<MixtureSample>& data, const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  char name[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const MixtureSample& s = data[i];
    std::snprintf(name, sizeof name, "sample%06zu/mixture", i);
    ck.tensors.emplace_back(name, s.mixture.detached_copy());
    for (std::size_t k = 0; k < s.stems.size(); ++k) {
      std::snprintf(name, sizeof name, "sample%06zu/stem%zu", i, k);
      ck.tensors.emplace_back(name, s.stems[k].detached_copy());
    }
    std::snprintf(name, sizeof name, "sample%06zu/norm", i);
    ck.tensors.emplace_back(name, Tensor::scalar(s.norm_factor));
    std::snprintf(name, sizeof name, "sample%06zu/params", i);
    std::vector<double> pv;
    for (const SourceDraw& d : s.params) {
      pv.push_back(d.kind == SourceKind::kHarmonic ? 0.0 : 1.0);
      pv.push_back(d.freq);
      pv.push_back(d.amp);
      pv.push_back(d.decay);
    }
    ck.tensors.emplace_back(name, Tensor({static_cast<int>(s.params.size()), 4}, std::move(pv)));
  }
  ck.save(path.string());
}

inline std::vector<MixtureSample> load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("dataset not found: " + path.string() +
                             " (run make-data into this output directory first)");
  Checkpoint ck = Checkpoint::load(path.string());
  std::vector<MixtureSample> out;
  char name[64];
  for (std::size_t i = 0;; ++i) {
    std::snprintf(name, sizeof name, "sample%06zu/mixture", i);
    const Tensor* mix = ck.find(name);
    if (mix == nullptr) break;
    MixtureSample s;
    s.mixture = mix->detached_copy();
    for (std::size_t k = 0;; ++k) {
      std::snprintf(name, sizeof name, "sample%06zu/stem%zu", i, k);
      const Tensor* stem = ck.find(name);
      if (stem == nullptr) break;
      s.stems.push_back(stem->detached_copy());
    }
    std::snprintf(name, sizeof name, "sample%06zu/norm", i);
    if (const Tensor* norm = ck.find(name)) s.norm_factor = norm->item();
    std::snprintf(name, sizeof name, "sample%06zu/params", i);
    if (const Tensor* pm = ck.find(name)) {
      for (int r = 0; r < pm->dim(0); ++r)
        s.params.push_back(SourceDraw{pm->at(r, 0) == 0.0 ? SourceKind::kHarmonic
                                                          : SourceKind::kPercussive,
                                      pm->at(r, 1), pm->at(r, 2), pm->at(r, 3), 0});
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint helpers for the two model kinds

inline void save_decomposition(const std::filesystem::path& path, const DecompositionModel& model,
                               const ExperimentConfig& cfg) {
  checkpoint_from_params(model.params(), config_to_string(cfg)).save(path.string());
}

inline DecompositionModel load_decomposition(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("checkpoint not found: " + path.string());
  Checkpoint ck = Checkpoint::load(path.string());
  ExperimentConfig cfg = parse_config(ck.config_text, path.string() + "[config]");
  DecompositionModel model(cfg.decomposition_config());
  NamedParams params = model.params();
  load_params(ck, params);
  return model;
}

inline void save_prior(const std::filesystem::path& path, const PriorModel& model,
                       const ExperimentConfig& cfg) {
  checkpoint_from_params(model.params(), config_to_string(cfg)).save(path.string());
}

inline PriorModel load_prior(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error("checkpoint not found: " + path.string());
  Checkpoint ck = Checkpoint::load(path.string());
  ExperimentConfig cfg = parse_config(ck.config_text, path.string() + "[config]");
  PriorModel model(cfg.prior_config());
  NamedParams params = model.params();
  load_params(ck, params);
  return model;
}

// ---------------------------------------------------------------------------
// commands

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
};

namespace detail {

inline DataConfig test_data_config(const ExperimentConfig& cfg) {
  DataConfig d = cfg.data_config();
  d.seed = derive_seed(cfg.eval_seed, 0x7e57);  // disjoint from the training stream
  return d;
}

inline void write_loss_trace(const std::filesystem::path& path,
                             const std::vector<double>& trace) {
  CsvWriter csv(path, "epoch,loss");
  for (std::size_t i = 0; i < trace.size(); ++i)
    csv.row({std::to_string(i + 1), fmt(trace[i])});
}

}  // namespace detail

inline void cmd_make_data(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  auto data = make_dataset(cfg.data_config(), cfg.data_size);
  save_dataset(out / "dataset.bin", data, config_to_string(cfg));
  if (cfg.wav_export) {
    std::filesystem::create_directories(out / "wav");
    const int n = std::min<int>(8, static_cast<int>(data.size()));
    for (int i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "sample%04d.wav", i);
      const Tensor& mix = data[static_cast<std::size_t>(i)].mixture;
      write_wav((out / "wav" / name).string(),
                mix.data().subspan(0, static_cast<std::size_t>(mix.dim(1))));
    }
  }
  std::cout << "wrote " << data.size() << " samples to " << (out / "dataset.bin").string()
            << "\n";
}

inline void cmd_train_decomp(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  auto data = load_dataset(out / "dataset.bin");
  std::vector<Tensor> mixtures;
  mixtures.reserve(data.size());
  for (const auto& s : data) mixtures.push_back(s.mixture);
  DecompositionModel model(cfg.decomposition_config());
  auto trace = train_decomposition(model, mixtures, cfg.train_config());
  detail::write_loss_trace(out / "loss_decomp.csv", trace);
  save_decomposition(out / "decomp.ckpt", model, cfg);
  std::cout << "trained decomposition (" << trace.size() << " epochs, final loss "
            << detail::fmt_short(trace.back()) << ") -> " << (out / "decomp.ckpt").string()
            << "\n";
}

inline void cmd_train_prior(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  DecompositionModel decomp = load_decomposition(out / "decomp.ckpt");
  auto data = load_dataset(out / "dataset.bin");
  NamedParams enc_params;
  decomp.encoder.params("enc", enc_params);
  const std::uint64_t checksum_before = params_checksum(enc_params);
  std::vector<Tensor> stacks;
  stacks.reserve(data.size());
  {
    NoGradGuard ng;
    for (const auto& s : data) stacks.push_back(decomp.encoder.forward_matrix(s.mixture));
  }
  PriorModel prior(cfg.prior_config());
  auto trace = train_prior(prior, stacks, cfg.prior_train_config());
  if (params_checksum(enc_params) != checksum_before)
    throw std::runtime_error("train-prior: frozen encoder parameters changed");
  detail::write_loss_trace(out / "loss_prior.csv", trace);
  save_prior(out / "prior.ckpt", prior, cfg);
  std::cout << "trained prior (" << trace.size() << " epochs, final loss "
            << detail::fmt_short(trace.back()) << ") -> " << (out / "prior.ckpt").string() << "\n";
}

inline void cmd_eval_separation(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  DecompositionModel model = load_decomposition(out / "decomp.ckpt");
  const DataConfig test_cfg = detail::test_data_config(cfg);
  const int crops = cfg.crops;
  const int n_src = model.cfg.n_latents;

  struct Row {
    SeparationScores score, baseline;
  };
  std::vector<std::vector<Row>> rows(static_cast<std::size_t>(crops));
  parallel_for(crops, cfg.workers, [&](int i) {
    MixtureSample s = make_sample(test_cfg, static_cast<std::uint64_t>(i));
    auto estimates = separate(model, s.mixture, cfg.steps, cfg.eval_seed + static_cast<std::uint64_t>(i));
    std::vector<std::vector<double>> est_flat, ref_flat;
    for (const auto& e : estimates) est_flat.push_back(flatten(e));
    for (const auto& r : s.stems) ref_flat.push_back(flatten(r));
    auto [perm, scores] = permute_and_score(est_flat, ref_flat);
    const std::vector<double> mix_flat = flatten(s.mixture);
    std::vector<Row>& crop_rows = rows[static_cast<std::size_t>(i)];
    crop_rows.resize(static_cast<std::size_t>(n_src));
    for (int e = 0; e < n_src; ++e) {
      crop_rows[static_cast<std::size_t>(e)].score = scores[static_cast<std::size_t>(e)];
      crop_rows[static_cast<std::size_t>(e)].baseline =
          si_scores(mix_flat, perm[static_cast<std::size_t>(e)], ref_flat);
    }
  });

  CsvWriter csv(out / "separation.csv",
                "crop,source,si_sdr,si_sir,si_sar,baseline_si_sdr,baseline_si_sir,baseline_si_sar");
  std::vector<double> sdr, sir, sar, bsdr, bsir, bsar;
  for (int i = 0; i < crops; ++i)
    for (int e = 0; e < n_src; ++e) {
      const Row& r = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(e)];
      csv.row({std::to_string(i), std::to_string(e), detail::fmt(r.score.si_sdr),
               detail::fmt(r.score.si_sir), detail::fmt(r.score.si_sar),
               detail::fmt(r.baseline.si_sdr), detail::fmt(r.baseline.si_sir),
               detail::fmt(r.baseline.si_sar)});
      sdr.push_back(r.score.si_sdr);
      sir.push_back(r.score.si_sir);
      sar.push_back(r.score.si_sar);
      bsdr.push_back(r.baseline.si_sdr);
      bsir.push_back(r.baseline.si_sir);
      bsar.push_back(r.baseline.si_sar);
    }
  CsvWriter summary(out / "separation_summary.csv", "metric,mean,std,finite,sentinels");
  auto srow = [&](const char* name, const std::vector<double>& v) {
    Aggregate a = aggregate(v);
    summary.row({name, detail::fmt(a.mean), detail::fmt(a.stddev), std::to_string(a.finite),
                 std::to_string(a.sentinels)});
  };
  srow("si_sdr", sdr);
  srow("si_sir", sir);
  srow("si_sar", sar);
  srow("baseline_si_sdr", bsdr);
  srow("baseline_si_sir", bsir);
  srow("baseline_si_sar", bsar);
  std::cout << "separation over " << crops << " crops: mean SI-SDR "
            << detail::fmt_short(aggregate(sdr).mean) << " dB (baseline "
            << detail::fmt_short(aggregate(bsdr).mean) << "), mean SI-SIR "
            << detail::fmt_short(aggregate(sir).mean) << " dB (baseline "
            << detail::fmt_short(aggregate(bsir).mean) << ")\n";
}

inline void cmd_reconstruct(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  DecompositionModel model = load_decomposition(out / "decomp.ckpt");
  const DataConfig test_cfg = detail::test_data_config(cfg);
  const int crops = cfg.crops;
  const STFTConfig stft = STFTConfig::for_length(cfg.length);
  std::vector<double> mses(static_cast<std::size_t>(crops)), stfts(static_cast<std::size_t>(crops));
  parallel_for(crops, cfg.workers, [&](int i) {
    MixtureSample s = make_sample(test_cfg, static_cast<std::uint64_t>(i));
    Tensor xhat = reconstruct(model, s.mixture, cfg.steps, cfg.eval_seed + static_cast<std::uint64_t>(i));
    mses[static_cast<std::size_t>(i)] = mse(s.mixture, xhat);
    const std::size_t L = static_cast<std::size_t>(cfg.length);
    stfts[static_cast<std::size_t>(i)] =
        ms_stft_distance(s.mixture.data().subspan(0, L), xhat.data().subspan(0, L), stft);
  });
  CsvWriter csv(out / "reconstruction.csv", "crop,mse,ms_stft");
  for (int i = 0; i < crops; ++i)
    csv.row({std::to_string(i), detail::fmt(mses[static_cast<std::size_t>(i)]),
             detail::fmt(stfts[static_cast<std::size_t>(i)])});
  CsvWriter summary(out / "reconstruction_summary.csv", "metric,mean,std,finite,sentinels");
  for (auto [name, v] : {std::pair<const char*, std::vector<double>*>{"mse", &mses},
                         {"ms_stft", &stfts}}) {
    Aggregate a = aggregate(*v);
    summary.row({name, detail::fmt(a.mean), detail::fmt(a.stddev), std::to_string(a.finite),
                 std::to_string(a.sentinels)});
  }
  std::cout << "reconstruction over " << crops << " crops: mean MSE "
            << detail::fmt(aggregate(mses).mean) << ", mean MS-STFT "
            << detail::fmt_short(aggregate(stfts).mean) << "\n";
}

inline void cmd_ablate_operators(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  auto data = load_dataset(out / "dataset.bin");
  std::vector<Tensor> mixtures;
  mixtures.reserve(data.size());
  for (const auto& s : data) mixtures.push_back(s.mixture);
  const DataConfig test_cfg = detail::test_data_config(cfg);
  const STFTConfig stft = STFTConfig::for_length(cfg.length);

  CsvWriter csv(out / "ablation.csv", "operator,crop,mse,ms_stft");
  CsvWriter summary(out / "ablation_summary.csv",
                    "operator,mse_mean,mse_std,ms_stft_mean,ms_stft_std");
  for (const char* op_name : {"sum", "mean", "min", "max"}) {
    ExperimentConfig op_cfg = cfg;
    op_cfg.op = op_name;
    DecompositionModel model(op_cfg.decomposition_config());
    train_decomposition(model, mixtures, op_cfg.train_config());
    save_decomposition(out / ("decomp_" + std::string(op_name) + ".ckpt"), model, op_cfg);
    std::vector<double> mses(static_cast<std::size_t>(cfg.crops));
    std::vector<double> stfts(static_cast<std::size_t>(cfg.crops));
    parallel_for(cfg.crops, cfg.workers, [&](int i) {
      MixtureSample s = make_sample(test_cfg, static_cast<std::uint64_t>(i));
      Tensor xhat =
          reconstruct(model, s.mixture, cfg.steps, cfg.eval_seed + static_cast<std::uint64_t>(i));
      mses[static_cast<std::size_t>(i)] = mse(s.mixture, xhat);
      const std::size_t L = static_cast<std::size_t>(cfg.length);
      stfts[static_cast<std::size_t>(i)] =
          ms_stft_distance(s.mixture.data().subspan(0, L), xhat.data().subspan(0, L), stft);
    });
    for (int i = 0; i < cfg.crops; ++i)
      csv.row({op_name, std::to_string(i), detail::fmt(mses[static_cast<std::size_t>(i)]),
               detail::fmt(stfts[static_cast<std::size_t>(i)])});
    const Aggregate am = aggregate(mses);
    const Aggregate as = aggregate(stfts);
    summary.row({op_name, detail::fmt(am.mean), detail::fmt(am.stddev), detail::fmt(as.mean),
                 detail::fmt(as.stddev)});
    std::cout << "operator " << op_name << ": mean MSE " << detail::fmt(am.mean)
              << ", mean MS-STFT " << detail::fmt_short(as.mean) << "\n";
  }
}

inline void cmd_eval_generation(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  DecompositionModel decomp = load_decomposition(out / "decomp.ckpt");
  PriorModel prior = load_prior(out / "prior.ckpt");
  const DataConfig test_cfg = detail::test_data_config(cfg);
  const int crops = cfg.crops;
  const int N = prior.cfg.n_latents;

  struct Row {
    int kept;
    double mse_true, mse_random;
    bool kept_exact;
  };
  std::vector<Row> rows(static_cast<std::size_t>(crops));
  parallel_for(crops, cfg.workers, [&](int i) {
    NoGradGuard ng;
    MixtureSample s = make_sample(test_cfg, static_cast<std::uint64_t>(i));
    LatentStack z = encode(decomp, s.mixture);
    // partner latents from another crop stand in for "random"
    MixtureSample other = make_sample(test_cfg, static_cast<std::uint64_t>((i + 1) % crops));
    LatentStack z_rand = encode(decomp, other.mixture);

    const int kept = i % N;
    Mask m = Mask::ones(N);
    m.bits[static_cast<std::size_t>(kept)] = 0;  // keep one latent, generate the rest
    LatentStack generated =
        generate(prior, std::make_pair(z, m), cfg.steps, cfg.eval_seed + static_cast<std::uint64_t>(i));

    bool exact = true;
    for (std::int64_t k = 0; k < z[static_cast<std::size_t>(kept)].size(); ++k)
      exact = exact && generated[static_cast<std::size_t>(kept)].at(k) ==
                           z[static_cast<std::size_t>(kept)].at(k);
    double mt = 0.0, mr = 0.0;
    int gen_count = 0;
    for (int j = 0; j < N; ++j) {
      if (j == kept) continue;
      mt += mse(generated[static_cast<std::size_t>(j)], z[static_cast<std::size_t>(j)]);
      mr += mse(generated[static_cast<std::size_t>(j)], z_rand[static_cast<std::size_t>(j)]);
      ++gen_count;
    }
    rows[static_cast<std::size_t>(i)] =
        Row{kept, mt / gen_count, mr / gen_count, exact};
  });

  CsvWriter csv(out / "generation.csv", "case,kept,mse_true,mse_random,kept_bit_exact");
  std::vector<double> mt, mr;
  int exact_count = 0;
  for (int i = 0; i < crops; ++i) {
    const Row& r = rows[static_cast<std::size_t>(i)];
    csv.row({std::to_string(i), std::to_string(r.kept), detail::fmt(r.mse_true),
             detail::fmt(r.mse_random), r.kept_exact ? "1" : "0"});
    mt.push_back(r.mse_true);
    mr.push_back(r.mse_random);
    exact_count += r.kept_exact ? 1 : 0;
  }
  CsvWriter summary(out / "generation_summary.csv",
                    "mse_true_mean,mse_true_std,mse_random_mean,mse_random_std,kept_exact_count,cases");
  const Aggregate at = aggregate(mt);
  const Aggregate ar = aggregate(mr);
  summary.row({detail::fmt(at.mean), detail::fmt(at.stddev), detail::fmt(ar.mean),
               detail::fmt(ar.stddev), std::to_string(exact_count), std::to_string(crops)});
  std::cout << "generation over " << crops << " cases: MSE vs true partner "
            << detail::fmt(at.mean) << ", vs random partner " << detail::fmt(ar.mean) << " ("
            << exact_count << "/" << crops << " kept latents bit-exact)\n";
}

// ---------------------------------------------------------------------------
// report

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline int cmd_report(const std::filesystem::path& out) {
  const std::vector<std::string> known = {"ablation_summary.csv", "separation_summary.csv",
                                          "generation_summary.csv", "reconstruction_summary.csv"};
  std::vector<std::string> present, missing;
  for (const auto& f : known)
    (std::filesystem::exists(out / f) ? present : missing).push_back(f);
  if (present.empty()) {
    std::cerr << "report: no result tables in " << out.string() << "; expected any of:\n";
    for (const auto& f : known) std::cerr << "  " << (out / f).string() << "\n";
    return 1;
  }

  if (std::filesystem::exists(out / "ablation_summary.csv")) {
    auto rows = read_csv(out / "ablation_summary.csv");
    std::printf("operator ablation (reconstruction)\n");
    std::printf("  %-8s %14s %14s\n", "operator", "MSE", "MS-STFT");
    for (std::size_t i = 1; i < rows.size(); ++i)
      std::printf("  %-8s %7.5g (%.3g) %7.4g (%.3g)\n", rows[i][0].c_str(),
                  std::stod(rows[i][1]), std::stod(rows[i][2]), std::stod(rows[i][3]),
                  std::stod(rows[i][4]));
    std::printf("\n");
  }
  if (std::filesystem::exists(out / "separation_summary.csv")) {
    auto rows = read_csv(out / "separation_summary.csv");
    std::printf("separation (dB, mean (std), finite/sentinel counts)\n");
    for (std::size_t i = 1; i < rows.size(); ++i)
      std::printf("  %-18s %8.4g (%.3g)   finite %s, inf %s\n", rows[i][0].c_str(),
                  std::stod(rows[i][1]), std::stod(rows[i][2]), rows[i][3].c_str(),
                  rows[i][4].c_str());
    std::printf("\n");
  }
  if (std::filesystem::exists(out / "reconstruction_summary.csv")) {
    auto rows = read_csv(out / "reconstruction_summary.csv");
    std::printf("reconstruction\n");
    for (std::size_t i = 1; i < rows.size(); ++i)
      std::printf("  %-10s %10.5g (%.3g)\n", rows[i][0].c_str(), std::stod(rows[i][1]),
                  std::stod(rows[i][2]));
    std::printf("\n");
  }
  if (std::filesystem::exists(out / "generation_summary.csv")) {
    auto rows = read_csv(out / "generation_summary.csv");
    if (rows.size() >= 2) {
      std::printf("prior variations (latent MSE)\n");
      std::printf("  vs true partner   %10.5g (%.3g)\n", std::stod(rows[1][0]),
                  std::stod(rows[1][1]));
      std::printf("  vs random partner %10.5g (%.3g)\n", std::stod(rows[1][2]),
                  std::stod(rows[1][3]));
      std::printf("  kept latents bit-exact: %s / %s\n", rows[1][4].c_str(), rows[1][5].c_str());
    }
    std::printf("\n");
  }
  if (!missing.empty()) {
    std::printf("not present (commands not run yet):");
    for (const auto& f : missing) std::printf(" %s", f.c_str());
    std::printf("\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// entry point shared by the CLI and tests

inline int run_command(const std::string& command, const std::string& config_path,
                       const std::string& out_dir, const RunOverrides& overrides = {}) {
  const std::filesystem::path out(out_dir);
  std::filesystem::create_directories(out);
  if (command == "report") return cmd_report(out);

  ExperimentConfig cfg = load_config(config_path);
  if (overrides.steps) cfg.steps = *overrides.steps;
  if (overrides.seed) {
    // the override targets the command's primary stream
    if (command == "make-data") cfg.data_seed = *overrides.seed;
    else if (command == "train-decomp" || command == "ablate-operators") cfg.train_seed = *overrides.seed;
    else if (command == "train-prior") cfg.prior_seed = *overrides.seed;
    else cfg.eval_seed = *overrides.seed;
  }
  {
    std::ofstream resolved(out / ("config_" + command + ".cfg"));
    resolved << config_to_string(cfg);
  }

  if (command == "make-data") cmd_make_data(cfg, out);
  else if (command == "train-decomp") cmd_train_decomp(cfg, out);
  else if (command == "train-prior") cmd_train_prior(cfg, out);
  else if (command == "eval-separation") cmd_eval_separation(cfg, out);
  else if (command == "eval-generation") cmd_eval_generation(cfg, out);
  else if (command == "reconstruct") cmd_reconstruct(cfg, out);
  else if (command == "ablate-operators") cmd_ablate_operators(cfg, out);
  else throw std::invalid_argument("unknown command '" + command + "'");
  return 0;
}

}  // namespace compodiff
