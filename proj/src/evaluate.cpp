#include "nbsa/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "nbsa/flops.hpp"
#include "nbsa/metrics.hpp"
#include "nbsa/pgm.hpp"
#include "nbsa/tensor_io.hpp"

namespace fs = std::filesystem;

namespace nbsa {
namespace pipeline {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  return os;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_dataset(const phantom::Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  auto emit_split = [&dir](const std::vector<phantom::PhantomSample>& samples, const std::string& split) {
    std::ofstream manifest = open_out((fs::path(dir) / ("manifest_" + split + ".csv")).string());
    manifest << "path,seed,severity\n";
    for (size_t i = 0; i < samples.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "%s_%04zu", split.c_str(), i);
      const auto& s = samples[i];
      save_tensor(s.image, (fs::path(dir) / (std::string(stem) + ".tns")).string());
      save_mask(s.mask, (fs::path(dir) / (std::string(stem) + ".msk")).string());
      manifest << stem << "," << s.seed << "," << phantom::severity_name(s.severity) << "\n";
    }
  };
  emit_split(ds.train, "train");
  emit_split(ds.test, "test");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("missing dataset manifest " + path + " (run the gen command first)");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string stem, seed, severity;
    std::getline(ss, stem, ',');
    std::getline(ss, seed, ',');
    std::getline(ss, severity, ',');
    ManifestEntry e;
    e.stem = stem;
    e.seed = std::stoull(seed);
    e.severity = phantom::severity_from(severity);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<LoadedSample> load_split(const std::string& dir, const std::string& split) {
  const auto entries = read_manifest((fs::path(dir) / ("manifest_" + split + ".csv")).string());
  std::vector<LoadedSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    LoadedSample s;
    s.image = load_tensor((fs::path(dir) / (e.stem + ".tns")).string());
    s.mask = load_mask((fs::path(dir) / (e.stem + ".msk")).string());
    s.meta = e;
    out.push_back(std::move(s));
  }
  return out;
}

EvalResult evaluate_dataset(const TinyUnet* model, const std::vector<LoadedSample>& samples,
                            const EvalSettings& st) {
  require(st.passthrough || model != nullptr, "evaluate: no model and passthrough disabled");
  EvalResult result;
  double dsc_sum = 0.0;
  std::int64_t dsc_n = 0;
  const double tau_px = st.tau / st.spacing;
  for (const auto& sample : samples) {
    const LabelMask truth = sample.mask;
    const LabelMask pred = st.passthrough ? truth : predict_mask(*model, sample.image);

    bool have_dose = false;
    phantom::DoseGrid dose;
    if (st.dose_enabled) {
      bool target_present = false;
      for (auto lb : truth.labels) target_present |= lb == st.dose_target;
      if (target_present) {
        dose = phantom::generate_dose(sample.meta.seed, truth, st.dose_target, st.prescription);
        have_dose = true;
      }
    }

    for (int label = 1; label < st.classes; ++label) {
      EvalRow row;
      row.sample_id = sample.meta.stem;
      row.severity = sample.meta.severity;
      row.structure = label;
      const metrics::BinaryMask ref = metrics::mask_for_label(truth, label);
      const metrics::BinaryMask hyp = metrics::mask_for_label(pred, label);
      row.dsc = metrics::dsc(ref, hyp);
      dsc_sum += row.dsc;
      ++dsc_n;
      const bool ref_ok = !ref.empty(), hyp_ok = !hyp.empty();
      if (ref_ok && hyp_ok) {
        row.sdsc = metrics::surface_dsc(ref, hyp, tau_px);
        row.hd95 = metrics::hd95(ref, hyp) * st.spacing;
      }
      if (ref_ok) {
        const auto eff = metrics::apl_tpl_car(ref, hyp);
        row.apl = eff.apl;
        row.tpl = eff.tpl;
        row.car = eff.car;
      }
      if (have_dose && ref_ok && hyp_ok) {
        const auto dm = metrics::dose_metrics(dose, ref, hyp, st.v_levels);
        row.mean_add = dm.mean_add;
        row.max_add = dm.max_add;
        if (dm.delta_vx.size() > 0) row.dv_lo = dm.delta_vx[0];
        if (dm.delta_vx.size() > 1) row.dv_hi = dm.delta_vx[1];
        row.dose_manual = metrics::mean_dose(dose, ref);
        row.dose_auto = metrics::mean_dose(dose, hyp);
      }
      result.rows.push_back(std::move(row));
    }
  }
  result.mean_dsc = dsc_n ? dsc_sum / static_cast<double>(dsc_n) : 0.0;
  return result;
}

double mean_dsc_for_severity(const EvalResult& result, phantom::Severity severity) {
  double s = 0.0;
  std::int64_t n = 0;
  for (const auto& row : result.rows)
    if (row.severity == severity) {
      s += row.dsc;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

namespace {

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : ""; }
std::string opt_str(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : ""; }

std::string dv_name(const std::vector<double>& levels, size_t i) {
  if (i < levels.size()) return "dv" + format_double(levels[i]);
  return i == 0 ? "dv5" : "dv30";
}

}  // namespace

void write_metrics_csv(const EvalResult& result, const EvalSettings& st, const std::string& path) {
  std::ofstream os = open_out(path);
  os << "sample_id,structure,dsc,sdsc@" << format_double(st.tau) << ",hd95,apl,tpl,car,mean_add,max_add,"
     << dv_name(st.v_levels, 0) << "," << dv_name(st.v_levels, 1) << "\n";
  for (const auto& r : result.rows) {
    os << r.sample_id << "," << r.structure << "," << format_double(r.dsc) << "," << opt_str(r.sdsc) << ","
       << opt_str(r.hd95) << "," << opt_str(r.apl) << "," << opt_str(r.tpl) << "," << opt_str(r.car) << ","
       << opt_str(r.mean_add) << "," << opt_str(r.max_add) << "," << opt_str(r.dv_lo) << "," << opt_str(r.dv_hi)
       << "\n";
  }
}

namespace {

using ordered_json = nlohmann::ordered_json;

struct Moments {
  double sum = 0, sq = 0;
  std::int64_t n = 0;
  void add(double v) {
    sum += v;
    sq += v * v;
    ++n;
  }
  ordered_json to_json() const {
    if (n == 0) return nullptr;
    const double mean = sum / static_cast<double>(n);
    double sd = 0.0;
    if (n > 1) {
      const double var = (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
      sd = var > 0 ? std::sqrt(var) : 0.0;
    }
    return ordered_json{{"mean", mean}, {"sd", sd}, {"n", n}};
  }
};

}  // namespace

std::string summary_json(const EvalResult& result, const EvalSettings& st) {
  ordered_json root;
  Moments overall;
  for (const auto& r : result.rows) overall.add(r.dsc);
  root["overall"] = ordered_json{{"dsc", overall.to_json()}};

  ordered_json organs = ordered_json::object();
  for (int label = 1; label < st.classes; ++label) {
    Moments dsc, sdsc, hd, car, madd, xadd, dvlo, dvhi;
    std::vector<double> man, aut;
    for (const auto& r : result.rows) {
      if (r.structure != label) continue;
      dsc.add(r.dsc);
      if (r.sdsc) sdsc.add(*r.sdsc);
      if (r.hd95) hd.add(*r.hd95);
      if (r.car) car.add(*r.car);
      if (r.mean_add) madd.add(*r.mean_add);
      if (r.max_add) xadd.add(*r.max_add);
      if (r.dv_lo) dvlo.add(*r.dv_lo);
      if (r.dv_hi) dvhi.add(*r.dv_hi);
      if (r.dose_manual && r.dose_auto) {
        man.push_back(*r.dose_manual);
        aut.push_back(*r.dose_auto);
      }
    }
    ordered_json o;
    o["dsc"] = dsc.to_json();
    o["sdsc"] = sdsc.to_json();
    o["hd95"] = hd.to_json();
    o["car"] = car.to_json();
    o["mean_add"] = madd.to_json();
    o["max_add"] = xadd.to_json();
    o[dv_name(st.v_levels, 0)] = dvlo.to_json();
    o[dv_name(st.v_levels, 1)] = dvhi.to_json();
    ordered_json rho = nullptr;
    if (man.size() >= 2) {
      try {
        rho = metrics::spearman(man, aut);
      } catch (const ValidationError&) {
        rho = nullptr;  // constant series
      }
    }
    o["spearman_mean_dose"] = rho;
    organs[std::to_string(label)] = std::move(o);
  }
  root["per_organ"] = std::move(organs);

  ordered_json strata = ordered_json::object();
  for (auto severity : {phantom::Severity::none, phantom::Severity::moderate, phantom::Severity::severe}) {
    Moments m;
    for (const auto& r : result.rows)
      if (r.severity == severity) m.add(r.dsc);
    strata[phantom::severity_name(severity)] = ordered_json{{"dsc", m.to_json()}};
  }
  root["per_severity"] = std::move(strata);
  return root.dump(2) + "\n";
}

// --- command drivers --------------------------------------------------------

namespace {

TinyUnetConfig model_config_from(const RunConfig& cfg) {
  TinyUnetConfig u;
  u.in_channels = 1;
  u.classes = cfg.get_int("data.classes");
  u.base_channels = cfg.get_int("model.base_channels");
  u.height = cfg.get_int("data.h");
  u.width = cfg.get_int("data.w");
  u.attn = cfg.attention();
  return u;
}

EvalSettings eval_settings_from(const RunConfig& cfg) {
  EvalSettings st;
  st.classes = cfg.get_int("data.classes");
  st.tau = cfg.get_double("eval.tau");
  st.spacing = cfg.get_double("eval.spacing");
  st.passthrough = cfg.get_bool("eval.passthrough");
  st.dose_target = cfg.get_int("eval.dose_target");
  st.prescription = cfg.get_double("eval.prescription");
  st.v_levels = cfg.get_double_list("eval.v_levels");
  st.dvh_bin = cfg.get_double("eval.dvh_bin");
  return st;
}

phantom::DatasetSpec dataset_spec_from(const RunConfig& cfg) {
  phantom::DatasetSpec spec;
  spec.p_none = cfg.get_double("data.p_none");
  spec.p_moderate = cfg.get_double("data.p_moderate");
  spec.p_severe = cfg.get_double("data.p_severe");
  spec.dropout = cfg.get_int_list("data.dropout");
  return spec;
}

}  // namespace

void run_gen(const RunConfig& cfg) {
  const auto ds = phantom::make_dataset(cfg.get_u64("seed"), cfg.get_int("data.n_train"),
                                        cfg.get_int("data.n_test"), cfg.get_int("data.h"),
                                        cfg.get_int("data.w"), cfg.get_int("data.classes"),
                                        dataset_spec_from(cfg));
  write_dataset(ds, cfg.get("data.dir"));
}

TinyUnet run_training(const RunConfig& cfg, const std::string& out_dir, TrainResult* curve_out) {
  const std::string data_dir = cfg.get("data.dir");
  const auto loaded = load_split(data_dir, "train");
  require(!loaded.empty(), "training split in " + data_dir + " is empty");

  TinyUnet model = build_tiny_unet(model_config_from(cfg), cfg.get_u64("seed"));
  std::vector<TrainSample> samples;
  samples.reserve(loaded.size());
  for (const auto& s : loaded) samples.push_back({s.image, s.mask});

  TrainConfig tc;
  tc.lr = cfg.get_double("train.lr");
  tc.epochs = cfg.get_int("train.epochs");
  tc.batch_size = cfg.get_int("train.batch");
  tc.seed = cfg.get_u64("seed");
  const TrainResult curve = train(model, samples, tc);

  fs::create_directories(out_dir);
  save_checkpoint(model, (fs::path(out_dir) / "model.ckpt").string());
  std::ofstream os = open_out((fs::path(out_dir) / "loss.csv").string());
  os << "epoch,loss\n";
  for (size_t i = 0; i < curve.epoch_loss.size(); ++i)
    os << (i + 1) << "," << format_double(curve.epoch_loss[i]) << "\n";
  if (curve_out) *curve_out = curve;
  return model;
}

void run_eval(const RunConfig& cfg, const std::string& out_dir) {
  const auto samples = load_split(cfg.get("data.dir"), "test");
  const EvalSettings st = eval_settings_from(cfg);
  TinyUnet model;
  const TinyUnet* model_ptr = nullptr;
  if (!st.passthrough) {
    const std::string ckpt = cfg.get("eval.checkpoint");
    require(!ckpt.empty(), "eval.checkpoint is required unless eval.passthrough=true");
    model = load_checkpoint(ckpt);
    model_ptr = &model;
  }
  const EvalResult result = evaluate_dataset(model_ptr, samples, st);
  fs::create_directories(out_dir);
  write_metrics_csv(result, st, (fs::path(out_dir) / "metrics.csv").string());
  std::ofstream js = open_out((fs::path(out_dir) / "summary.json").string());
  js << summary_json(result, st);

  if (cfg.get_bool("eval.dump_dvh")) {
    const std::string dvh_dir = (fs::path(out_dir) / "dvh").string();
    fs::create_directories(dvh_dir);
    for (const auto& sample : samples) {
      bool target_present = false;
      for (auto lb : sample.mask.labels) target_present |= lb == st.dose_target;
      if (!target_present) continue;
      const auto dose = phantom::generate_dose(sample.meta.seed, sample.mask, st.dose_target, st.prescription);
      for (int label = 1; label < st.classes; ++label) {
        const auto m = metrics::mask_for_label(sample.mask, label);
        if (m.empty()) continue;
        const auto curve = metrics::dvh(dose, m, st.dvh_bin);
        std::ofstream cs = open_out((fs::path(dvh_dir) / (sample.meta.stem + "_organ" + std::to_string(label) + ".csv")).string());
        cs << "dose_gy,fraction\n";
        for (size_t i = 0; i < curve.dose_edges.size(); ++i)
          cs << format_double(curve.dose_edges[i]) << "," << format_double(curve.cumulative_fraction[i]) << "\n";
      }
    }
  }
}

namespace {

struct BenchRow {
  int h = 0, w = 0, c = 0, d = 0, b = 0, s = 0, layers = 0;
  AttnVariant variant = AttnVariant::nbsa;
};

bool parse_bench_row(const std::string& text, BenchRow& row, std::string& error) {
  std::stringstream ss(text);
  std::string tok;
  bool have_size = false, have_variant = false;
  while (ss >> tok) {
    if (tok.find('x') != std::string::npos && !have_size) {
      const auto cut = tok.find('x');
      try {
        row.h = std::stoi(tok.substr(0, cut));
        row.w = std::stoi(tok.substr(cut + 1));
      } catch (const std::exception&) {
        error = "bad size token '" + tok + "'";
        return false;
      }
      have_size = true;
    } else if (tok == "nbsa" || tok == "full_sa") {
      row.variant = tok == "nbsa" ? AttnVariant::nbsa : AttnVariant::full_sa;
      have_variant = true;
    } else if (tok.size() >= 2 && std::isdigit(static_cast<unsigned char>(tok[1]))) {
      int value = 0;
      try {
        value = std::stoi(tok.substr(1));
      } catch (const std::exception&) {
        error = "bad token '" + tok + "'";
        return false;
      }
      switch (tok[0]) {
        case 'c': row.c = value; break;
        case 'd': row.d = value; break;
        case 'b': row.b = value; break;
        case 's': row.s = value; break;
        case 'l': row.layers = value; break;
        default: error = "bad token '" + tok + "'"; return false;
      }
    } else {
      error = "bad token '" + tok + "'";
      return false;
    }
  }
  if (!have_size || !have_variant || row.c <= 0 || row.d <= 0 || row.layers <= 0) {
    error = "row must carry HxW, c, d, l and a variant";
    return false;
  }
  if (row.variant == AttnVariant::nbsa && (row.b <= 0 || row.s <= 0)) {
    error = "nbsa rows need b and s";
    return false;
  }
  return true;
}

double time_forward_ms(const BenchRow& row, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = Tensor::zeros({row.c, row.h, row.w});
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  std::vector<AttentionWeights> layers;
  for (int i = 0; i < row.layers; ++i) layers.push_back(make_attention_weights(row.c, row.d, 0, rng));
  BlockSchedule sched;
  if (row.variant == AttnVariant::nbsa) sched = enumerate_blocks(row.h, row.w, row.b, row.s);
  const auto t0 = std::chrono::steady_clock::now();
  Tensor out = x;
  if (row.variant == AttnVariant::nbsa)
    out = nbsa_stack(out, layers, sched);
  else
    for (const auto& w : layers) out = full_self_attention(out, w);
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

void run_bench(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream os = open_out((fs::path(out_dir) / "bench.csv").string());
  os << "variant,H,W,C,d,B,s,layers,blocks,projections,logits,softmax,weighting,output_projection,"
        "residual,total,cca_total,time_ms\n";
  const bool do_time = cfg.get_bool("bench.time");
  const std::uint64_t cap = cfg.get_u64("bench.time_cap");

  std::stringstream rows(cfg.get("bench.grid"));
  std::string row_text;
  while (std::getline(rows, row_text, ';')) {
    if (row_text.find_first_not_of(" \t") == std::string::npos) continue;
    BenchRow row;
    std::string error;
    if (!parse_bench_row(row_text, row, error)) {
      std::cerr << "bench: skipping row '" << row_text << "': " << error << "\n";
      continue;
    }
    AttentionConfig ac;
    ac.variant = row.variant;
    ac.n_layers = row.layers;
    ac.block = row.b;
    ac.stride = row.s;
    ac.overlap = row.variant == AttnVariant::nbsa && row.s < row.b;
    ac.channels = row.d;
    FlopLedger ledger;
    try {
      ledger = count_flops(ac, row.c, row.d, row.h, row.w);
    } catch (const ValidationError& e) {
      std::cerr << "bench: skipping row '" << row_text << "': " << e.what() << "\n";
      continue;
    }
    std::string time_cell;
    if (do_time && ledger.total <= cap)
      time_cell = format_double(time_forward_ms(row, cfg.get_u64("seed")));
    os << (row.variant == AttnVariant::nbsa ? "nbsa" : "full_sa") << "," << row.h << "," << row.w << ","
       << row.c << "," << row.d << "," << row.b << "," << row.s << "," << row.layers << "," << ledger.blocks
       << "," << ledger.projections << "," << ledger.logits << "," << ledger.softmax << "," << ledger.weighting
       << "," << ledger.output_projection << "," << ledger.residual << "," << ledger.total << ","
       << cca_total(row.c, row.d, row.h, row.w, row.layers) << "," << time_cell << "\n";
  }
}

namespace {

// Valid overlap stride closest to round(2B/3); larger wins ties.
int pick_overlap_stride(int size, int block) {
  const int want = static_cast<int>(std::lround(2.0 * block / 3.0));
  int best = -1;
  for (int s = 1; s < block; ++s) {
    if ((size - block) % s != 0) continue;
    if (best < 0 || std::abs(s - want) < std::abs(best - want) ||
        (std::abs(s - want) == std::abs(best - want) && s > best))
      best = s;
  }
  return best;
}

}  // namespace

void run_ablation(const RunConfig& cfg, const std::string& out_dir) {
  const int size = cfg.get_int("ablate.size");
  require(size % 4 == 0, "ablate.size must be divisible by 4");
  const int classes = cfg.get_int("data.classes");
  const auto ds = phantom::make_dataset(cfg.get_u64("seed"), cfg.get_int("ablate.n_train"),
                                        cfg.get_int("ablate.n_test"), size, size, classes,
                                        dataset_spec_from(cfg));
  std::vector<TrainSample> train_samples;
  for (const auto& s : ds.train) train_samples.push_back({s.image, s.mask});
  std::vector<LoadedSample> test_samples;
  for (size_t i = 0; i < ds.test.size(); ++i) {
    LoadedSample ls;
    ls.image = ds.test[i].image;
    ls.mask = ds.test[i].mask;
    ls.meta.stem = "test_" + std::to_string(i);
    ls.meta.seed = ds.test[i].seed;
    ls.meta.severity = ds.test[i].severity;
    test_samples.push_back(std::move(ls));
  }

  struct Cell {
    int layers, block, stride;
    bool overlap;
    AttnPlacement placement;
    double mean_dsc = 0, severe_dsc = 0;
    int64_t params = 0;
    bool done = false;
  };
  std::vector<Cell> cells;
  for (int layers : cfg.get_int_list("ablate.layers"))
    for (AttnPlacement placement : {AttnPlacement::penultimate, AttnPlacement::last})
      for (int block : cfg.get_int_list("ablate.blocks"))
        for (bool overlap : {true, false}) {
          int stride = overlap ? pick_overlap_stride(size, block) : (size % block == 0 ? block : -1);
          if (stride < 0) {
            std::cerr << "ablate: no exact tiling for B=" << block << (overlap ? " overlap" : " non-overlap")
                      << " at size " << size << ", skipping\n";
            continue;
          }
          cells.push_back(Cell{layers, block, stride, overlap, placement});
        }

  EvalSettings st = eval_settings_from(cfg);
  st.passthrough = false;
  st.dose_enabled = false;

  TrainConfig tc;
  tc.lr = cfg.get_double("train.lr");
  tc.epochs = cfg.get_int("ablate.epochs");
  tc.batch_size = cfg.get_int("train.batch");
  tc.seed = cfg.get_u64("seed");

  auto run_cell = [&](Cell& cell) {
    TinyUnetConfig u;
    u.classes = classes;
    u.base_channels = cfg.get_int("model.base_channels");
    u.height = size;
    u.width = size;
    u.attn = cfg.attention();
    u.attn.variant = AttnVariant::nbsa;
    u.attn.n_layers = cell.layers;
    u.attn.block = cell.block;
    u.attn.stride = cell.stride;
    u.attn.overlap = cell.overlap;
    u.attn.placement = cell.placement;
    TinyUnet model = build_tiny_unet(u, cfg.get_u64("seed"));
    cell.params = model.param_count();
    std::vector<TrainSample> local = train_samples;  // shared tensors, thread-local vector
    train(model, local, tc);
    const EvalResult res = evaluate_dataset(&model, test_samples, st);
    cell.mean_dsc = res.mean_dsc;
    cell.severe_dsc = mean_dsc_for_severity(res, phantom::Severity::severe);
    cell.done = true;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(cells.size()));
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  for (unsigned t = 0; t < workers; ++t)
    pool.emplace_back([&] {
      while (true) {
        const size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        run_cell(cells[i]);
      }
    });
  for (auto& th : pool) th.join();

  fs::create_directories(out_dir);
  std::ofstream os = open_out((fs::path(out_dir) / "ablation.csv").string());
  os << "layers,placement,block,stride,overlap,mean_dsc,severe_dsc,params,epochs,n_train,n_test,size\n";
  for (const auto& c : cells) {
    os << c.layers << "," << (c.placement == AttnPlacement::penultimate ? "penultimate" : "last") << ","
       << c.block << "," << c.stride << "," << (c.overlap ? "true" : "false") << ","
       << format_double(c.mean_dsc) << "," << format_double(c.severe_dsc) << "," << c.params << ","
       << tc.epochs << "," << cfg.get_int("ablate.n_train") << "," << cfg.get_int("ablate.n_test") << ","
       << size << "\n";
  }
}

void run_attmap(const RunConfig& cfg, const std::string& out_dir) {
  TinyUnet model;
  const std::string ckpt = cfg.get("attmap.checkpoint");
  if (!ckpt.empty())
    model = load_checkpoint(ckpt);
  else
    model = build_tiny_unet(model_config_from(cfg), cfg.get_u64("seed"));
  require(model.config.attn.variant == AttnVariant::nbsa,
          "attention map export needs attn.variant=nbsa");

  const auto sample = phantom::generate(cfg.get_u64("attmap.sample_seed"), model.config.height,
                                        model.config.width, cfg.get_int("data.classes"),
                                        phantom::severity_from(cfg.get("attmap.severity")));
  Tensor x = unet_attention_input(model, sample.image);
  const int layer = cfg.get_int("attmap.layer");
  require(layer >= 1 && layer <= static_cast<int>(model.attn_layers.size()),
          "attmap.layer out of range (model has " + std::to_string(model.attn_layers.size()) + " layers)");
  NbsaOptions opt;
  opt.average = model.config.attn.avg_aggregate;
  for (int i = 0; i + 1 < layer; ++i) x = nbsa_layer(x, model.attn_layers[static_cast<size_t>(i)], model.schedule, opt);

  const auto map = export_attention_map(x, model.attn_layers[static_cast<size_t>(layer - 1)], model.schedule,
                                        cfg.get_int("attmap.row"), cfg.get_int("attmap.col"));
  fs::create_directories(out_dir);
  write_pgm((fs::path(out_dir) / "attention_map.pgm").string(), model.config.height, model.config.width,
            normalize_to_bytes(map));
  write_pgm((fs::path(out_dir) / "probe_image.pgm").string(), model.config.height, model.config.width,
            normalize_to_bytes(sample.image.values()));
}

}  // namespace pipeline
}  // namespace nbsa
