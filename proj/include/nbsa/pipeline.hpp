#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nbsa/config.hpp"
#include "nbsa/phantom.hpp"
#include "nbsa/unet.hpp"

namespace nbsa {
namespace pipeline {

// --- dataset on disk ------------------------------------------------------
// <dir>/<stem>.tns (image), <dir>/<stem>.msk (mask), plus per-split
// manifests manifest_train.csv / manifest_test.csv with columns
// path,seed,severity.

struct ManifestEntry {
  std::string stem;
  std::uint64_t seed = 0;
  phantom::Severity severity = phantom::Severity::none;
};

struct LoadedSample {
  Tensor image;
  LabelMask mask;
  ManifestEntry meta;
};

void write_dataset(const phantom::Dataset& ds, const std::string& dir);
std::vector<ManifestEntry> read_manifest(const std::string& path);
std::vector<LoadedSample> load_split(const std::string& dir, const std::string& split);

// --- batch evaluation ------------------------------------------------------

struct EvalSettings {
  int classes = 5;
  double tau = 1.0;      // spacing units
  double spacing = 1.0;  // units per pixel
  bool passthrough = false;
  bool dose_enabled = true;
  int dose_target = 1;
  double prescription = 70.0;
  std::vector<double> v_levels = {5.0, 30.0};
  double dvh_bin = 0.5;
};

struct EvalRow {
  std::string sample_id;
  phantom::Severity severity = phantom::Severity::none;
  int structure = 0;
  double dsc = 0.0;
  std::optional<double> sdsc, hd95, car;
  std::optional<std::int64_t> apl, tpl;
  std::optional<double> mean_add, max_add, dv_lo, dv_hi;
  std::optional<double> dose_manual, dose_auto;  // mean doses, feed spearman
};

struct EvalResult {
  std::vector<EvalRow> rows;
  double mean_dsc = 0.0;  // over all rows
};

EvalResult evaluate_dataset(const TinyUnet* model, const std::vector<LoadedSample>& samples,
                            const EvalSettings& settings);

double mean_dsc_for_severity(const EvalResult& result, phantom::Severity severity);

void write_metrics_csv(const EvalResult& result, const EvalSettings& settings,
                       const std::string& path);
std::string summary_json(const EvalResult& result, const EvalSettings& settings);

// Shortest round-trip decimal form (std::to_chars); CSV/JSON stay bitwise
// reproducible across runs.
std::string format_double(double v);

// --- command drivers --------------------------------------------------------

void run_gen(const RunConfig& cfg);
TinyUnet run_training(const RunConfig& cfg, const std::string& out_dir, TrainResult* curve_out);
void run_eval(const RunConfig& cfg, const std::string& out_dir);
void run_bench(const RunConfig& cfg, const std::string& out_dir);
void run_ablation(const RunConfig& cfg, const std::string& out_dir);
void run_attmap(const RunConfig& cfg, const std::string& out_dir);

}  // namespace pipeline
}  // namespace nbsa
