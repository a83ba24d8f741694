// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Groups: oracles (1-7), learning (8), ablation (9),
// determinism (10).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nbsa/attention.hpp"
#include "nbsa/flops.hpp"
#include "nbsa/gradcheck.hpp"
#include "nbsa/metrics.hpp"
#include "nbsa/oracle.hpp"
#include "nbsa/phantom.hpp"
#include "nbsa/pipeline.hpp"
#include "nbsa/rng.hpp"
#include "nbsa/unet.hpp"

#ifndef NBSA_CLI_PATH
#define NBSA_CLI_PATH "./nbsa"
#endif

namespace fs = std::filesystem;
using namespace nbsa;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

std::vector<Outcome> g_results;

void record(const std::string& name, bool pass, const std::string& detail, Clock::time_point t0) {
  Outcome o;
  o.name = name;
  o.pass = pass;
  o.detail = detail;
  o.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ostringstream line;
  line.setf(std::ios::fixed);
  line.precision(1);
  line << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << " (" << o.seconds << " s)";
  std::cout << line.str() << std::endl;
  g_results.push_back(std::move(o));
}

Tensor rnd(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(NBSA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nbsa_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// --- criterion 1 -------------------------------------------------------------

void criterion_degenerate() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst = 0;
  const int sides[3] = {4, 8, 12};
  const int channels[3] = {2, 4, 8};
  for (int seed = 0; seed < 100; ++seed) {
    const int side = sides[seed % 3];
    const int c = channels[(seed / 3) % 3];
    Rng wr = rng.fork(static_cast<std::uint64_t>(seed));
    AttentionWeights w = make_attention_weights(c, std::max(1, c / 2), 0, wr);
    Tensor x = rnd({c, side, side}, rng);
    const BlockSchedule sched = enumerate_blocks(side, side, side, side);
    Tensor a = nbsa_layer(x, w, sched);
    Tensor b = full_self_attention(x, w);
    for (int64_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  }
  std::ostringstream d;
  d << "single-block layer vs all-pairs attention, 100 seeds, max |diff| = " << worst << " (< 1e-12)";
  record("criterion 1 degenerate equivalence", worst < 1e-12, d.str(), t0);
}

// --- criterion 2 -------------------------------------------------------------

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(2000 + static_cast<std::uint64_t>(seed));
    const int c = 3, d = 2;
    const BlockSchedule sched = enumerate_blocks(6, 6, 4, 2);
    Rng wr = rng.fork(1);
    AttentionWeights w1 = make_attention_weights(c, d, 0, wr);
    AttentionWeights w2 = make_attention_weights(c, d, 0, wr);
    Tensor x = rnd({c, 6, 6}, rng);
    Tensor proj = rnd({c, 6, 6}, rng, 0.5, 1.5);
    auto forward = [&sched](const Tensor& in, const AttentionWeights& a, const AttentionWeights& b) {
      return nested_nbsa(in, a, b, sched);
    };
    std::vector<Tensor> params;
    for (auto& t : w1.params()) params.push_back(t);
    for (auto& t : w2.params()) params.push_back(t);
    std::vector<double> ad_x;
    std::vector<std::vector<double>> ad_w;
    {
      Tape tape;
      Tensor leaf = x.detached_clone();
      tape.watch(leaf);
      for (auto& t : params) tape.watch(t);
      tape.backward(sum(mul(forward(leaf, w1, w2), proj)));
      ad_x = leaf.grad();
      for (auto& t : params) ad_w.push_back(t.grad());
    }
    Tensor fd_x = finite_diff_gradient(
        [&](const Tensor& probe) { return sum(mul(forward(probe, w1, w2), proj)).value(); }, x, 1e-5);
    worst = std::max(worst, max_rel_error(ad_x, {fd_x.data(), fd_x.data() + fd_x.size()}));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      Tensor fd_w = finite_diff_gradient(
          [&](const Tensor& probe) {
            AttentionWeights a = w1, b = w2;
            std::vector<Tensor*> slots = {&a.w_theta, &a.w_phi, &a.w_g, &a.w_out,
                                          &b.w_theta, &b.w_phi, &b.w_g, &b.w_out};
            *slots[pi] = probe;
            return sum(mul(forward(x, a, b), proj)).value();
          },
          params[pi], 1e-5);
      worst = std::max(worst, max_rel_error(ad_w[pi], {fd_w.data(), fd_w.data() + fd_w.size()}));
    }
  }
  std::ostringstream d;
  d << "two stacked blocked layers (6x6, B=4, s=2), 20 seeds, max rel err = " << worst << " (< 1e-4)";
  record("criterion 2 gradient correctness", worst < 1e-4, d.str(), t0);
}

// --- criterion 3 -------------------------------------------------------------

void criterion_skew() {
  const auto t0 = Clock::now();
  int compared = 0;
  bool ok = true;
  for (int seed = 0; seed < 50 && ok; ++seed) {
    Rng rng(3000 + static_cast<std::uint64_t>(seed));
    for (int l = 1; l <= 16 && ok; ++l)
      for (int d = 1; d <= 8 && ok; ++d) {
        Tensor q = rnd({l, d}, rng);
        Tensor e = rnd({2 * l - 1, d}, rng);
        Tensor a = relative_logits_skew(q, e);
        Tensor b = relative_logits_naive(q, e);
        ok = std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
        ++compared;
      }
  }
  std::ostringstream d;
  d << "pad/reshape/reslice vs gather, " << compared << " bitwise comparisons (L<=16, d<=8, 50 seeds)";
  record("criterion 3 skew oracle", ok, d.str(), t0);
}

// --- criterion 4 -------------------------------------------------------------

void criterion_support_reach() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string why = "block-diagonal support (s=B) and cross-block reach (dual, s=1) on a 1x8 strip";
  for (int seed = 0; seed < 5 && ok; ++seed) {
    Rng rng(4000 + static_cast<std::uint64_t>(seed));
    Rng wr = rng.fork(1);
    AttentionWeights w1 = make_attention_weights(1, 1, 0, wr);
    AttentionWeights w2 = make_attention_weights(1, 1, 0, wr);
    Tensor x = rnd({1, 1, 8}, rng);
    const double h = 1e-5;
    {  // non-overlap single layer: exactly block-diagonal
      const BlockSchedule sched = enumerate_blocks(1, 8, 2, 2);
      for (int i = 0; i < 8 && ok; ++i) {
        Tensor xp = x.detached_clone(), xm = x.detached_clone();
        xp.data()[i] += h;
        xm.data()[i] -= h;
        Tensor p = nbsa_layer(xp, w1, sched), m = nbsa_layer(xm, w1, sched);
        for (int j = 0; j < 8 && ok; ++j) {
          const double jac = (p.data()[j] - m.data()[j]) / (2 * h);
          if (i / 2 == j / 2) {
            if (jac == 0.0 && i == j) ok = false;  // diagonal must respond
          } else if (jac != 0.0) {
            ok = false;
            why = "cross-block Jacobian leak in the non-overlapping single layer";
          }
        }
      }
    }
    if (!ok) break;
    {  // overlapped dual layer: nonzero entry between non-adjacent blocks
      const BlockSchedule sched = enumerate_blocks(1, 8, 2, 1);
      Tensor xp = x.detached_clone(), xm = x.detached_clone();
      xp.data()[0] += h;
      xm.data()[0] -= h;
      Tensor p = nested_nbsa(xp, w1, w2, sched), m = nested_nbsa(xm, w1, w2, sched);
      const double cross = (p.data()[2] - m.data()[2]) / (2 * h);
      if (cross == 0.0) {
        ok = false;
        why = "dual overlapped layer failed to reach across blocks";
      }
    }
  }
  record("criterion 4 jacobian support/reach", ok, why + ", 5 seeds", t0);
}

// --- criterion 5 -------------------------------------------------------------

void criterion_complexity() {
  const auto t0 = Clock::now();
  AttentionConfig nb;
  nb.variant = AttnVariant::nbsa;
  nb.n_layers = 2;
  nb.block = 36;
  nb.stride = 24;
  nb.overlap = true;
  const FlopLedger blocked = count_flops(nb, 64, 32, 252, 252);
  AttentionConfig fs = nb;
  fs.variant = AttnVariant::full_sa;
  const FlopLedger full = count_flops(fs, 64, 32, 252, 252);

  const std::uint64_t n = 252ULL * 252;
  const std::uint64_t l2 = 36ULL * 36 * 36 * 36;
  bool ok = blocked.blocks == 100;
  ok &= blocked.projections == 2 * 3 * n * 64 * 32 && blocked.logits == 2 * 100 * l2 * 32 &&
        blocked.softmax == 2 * 100 * l2 && blocked.weighting == blocked.logits &&
        blocked.output_projection == 2 * n * 32 * 64 && blocked.residual == 2 * n * 64 &&
        blocked.total == blocked.stage_sum();
  ok &= full.logits == 2 * n * n * 32 && full.total == full.stage_sum();
  ok &= blocked.total * 10 < full.total;

  // the CLI bench must record the same counted numbers
  const fs::path dir = work_dir("bench");
  const int rc = run_cli("bench --out " + dir.string(), dir / "cli.log");
  const std::string csv = slurp(dir / "bench.csv");
  std::ostringstream nb_row, full_row;
  nb_row << "nbsa,252,252,64,32,36,24,2,100," << blocked.projections << "," << blocked.logits << ","
         << blocked.softmax << "," << blocked.weighting << "," << blocked.output_projection << ","
         << blocked.residual << "," << blocked.total << ",";
  full_row << "full_sa,252,252,64,32,36,24,2,1," << full.projections << "," << full.logits;
  ok &= rc == 0 && csv.find(nb_row.str()) != std::string::npos && csv.find(full_row.str()) != std::string::npos;

  std::ostringstream d;
  d << "blocked total " << blocked.total << " vs all-pairs " << full.total << " (ratio "
    << static_cast<double>(full.total) / static_cast<double>(blocked.total)
    << ", blocks=100 audited against ((252-36)/24+1)^2; bench CSV matches)";
  record("criterion 5 complexity claim", ok, d.str(), t0);
}

// --- criterion 6 -------------------------------------------------------------

void criterion_metric_oracles() {
  const auto t0 = Clock::now();
  Rng rng(6001);
  bool ok = true;
  int checked = 0;
  double worst_hd = 0;
  for (int seed = 0; seed < 200 && ok; ++seed) {
    metrics::BinaryMask a{16, 16, std::vector<std::uint8_t>(256, 0)};
    metrics::BinaryMask b{16, 16, std::vector<std::uint8_t>(256, 0)};
    const int na = 1 + static_cast<int>(rng.below(64)), nb = 1 + static_cast<int>(rng.below(64));
    for (int i = 0; i < na; ++i) a.fg[rng.below(256)] = 1;
    for (int i = 0; i < nb; ++i) b.fg[rng.below(256)] = 1;
    const double tau = 0.5 * static_cast<double>(1 + rng.below(4));
    const auto want = oracle::mask_metrics(a.fg, b.fg, 16, 16, tau);
    ok &= metrics::dsc(a, b) == want.dsc;
    const double hd = metrics::hd95(a, b);
    worst_hd = std::max(worst_hd, std::fabs(hd - want.hd95));
    ok &= std::fabs(hd - want.hd95) < 1e-9;
    ok &= metrics::surface_dsc(a, b, tau) == want.sdsc;
    const auto eff = metrics::apl_tpl_car(a, b);
    ok &= eff.apl == want.apl && eff.tpl == want.tpl;
    ++checked;
  }
  std::ostringstream d;
  d << checked << " random mask pairs (<=64 fg px): set metrics exact, hd95 max |diff| = " << worst_hd;
  record("criterion 6 metric oracles", ok, d.str(), t0);
}

// --- criterion 7 -------------------------------------------------------------

void criterion_dvh() {
  const auto t0 = Clock::now();
  bool ok = true;
  {  // uniform dose: exact plateau then zero
    phantom::DoseGrid g;
    g.h = 2;
    g.w = 2;
    g.prescription = 10;
    g.dose = {10, 10, 10, 10};
    metrics::BinaryMask m{2, 2, {1, 1, 1, 1}};
    const auto c = metrics::dvh(g, m, 3.0);
    for (size_t i = 0; i < c.dose_edges.size(); ++i)
      ok &= c.cumulative_fraction[i] == (c.dose_edges[i] <= 10.0 ? 1.0 : 0.0);
  }
  {  // counted ramp
    phantom::DoseGrid g;
    g.h = 1;
    g.w = 5;
    g.prescription = 5;
    g.dose = {1, 2, 3, 4, 5};
    metrics::BinaryMask m{1, 5, {1, 1, 1, 1, 1}};
    const auto c = metrics::dvh(g, m, 1.0);
    const double want[6] = {1.0, 1.0, 0.8, 0.6, 0.4, 0.2};
    ok &= c.dose_edges.size() == 6;
    for (size_t i = 0; i < c.dose_edges.size(); ++i) ok &= c.cumulative_fraction[i] == want[i];
    // hand dose metrics on the 2x2 grid [[10,20],[30,40]]
    phantom::DoseGrid q;
    q.h = 2;
    q.w = 2;
    q.prescription = 40;
    q.dose = {10, 20, 30, 40};
    metrics::BinaryMask top{2, 2, {1, 1, 0, 0}}, bottom{2, 2, {0, 0, 1, 1}};
    const auto dm = metrics::dose_metrics(q, top, bottom, {5, 30});
    ok &= dm.mean_add == 20.0 && dm.max_add == 20.0 && dm.delta_vx[0] == 0.0 && dm.delta_vx[1] == 100.0;
  }
  Rng rng(7001);
  for (int trial = 0; trial < 100 && ok; ++trial) {
    phantom::DoseGrid g;
    g.h = 8;
    g.w = 8;
    g.prescription = 60;
    for (int i = 0; i < 64; ++i) g.dose.push_back(rng.uniform(0.0, 60.0));
    metrics::BinaryMask m{8, 8, std::vector<std::uint8_t>(64, 0)};
    for (int i = 0; i < 10; ++i) m.fg[rng.below(64)] = 1;
    if (m.empty()) m.fg[0] = 1;
    const auto c = metrics::dvh(g, m, 2.0);
    ok &= c.cumulative_fraction.front() == 1.0;
    for (size_t i = 1; i < c.cumulative_fraction.size(); ++i)
      ok &= c.cumulative_fraction[i] <= c.cumulative_fraction[i - 1];
  }
  record("criterion 7 dvh and dose metrics",
         ok, "uniform and ramp cases exact; monotone on 100 random dose/mask pairs", t0);
}

// --- criterion 8 -------------------------------------------------------------

void criterion_learning() {
  const auto t0 = Clock::now();
  const auto ds = phantom::make_dataset(42, 200, 50, 64, 64, 5);
  std::vector<TrainSample> train_samples;
  for (const auto& s : ds.train) train_samples.push_back({s.image, s.mask});
  std::vector<pipeline::LoadedSample> test_samples;
  for (size_t i = 0; i < ds.test.size(); ++i) {
    pipeline::LoadedSample ls;
    ls.image = ds.test[i].image;
    ls.mask = ds.test[i].mask;
    ls.meta.stem = "test_" + std::to_string(i);
    ls.meta.seed = ds.test[i].seed;
    ls.meta.severity = ds.test[i].severity;
    test_samples.push_back(std::move(ls));
  }

  struct Run {
    bool attention;
    std::uint64_t seed;
    double dsc = 0, severe = 0;
  };
  std::vector<Run> runs;
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    runs.push_back({true, seed});
    runs.push_back({false, seed});
  }
  pipeline::EvalSettings st;
  st.classes = 5;
  st.dose_enabled = false;

  // lr 2e-3 for this check (the 2e-4 default is kept as the paper echo);
  // both arms train identically for 18 epochs (within the 20-epoch bound).
  const int epochs = 18;
  const double lr = 2e-3;
  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      Run& run = runs[i];
      TinyUnetConfig cfg;
      cfg.classes = 5;
      cfg.base_channels = 8;
      cfg.height = 64;
      cfg.width = 64;
      cfg.attn.variant = run.attention ? AttnVariant::nbsa : AttnVariant::none;
      cfg.attn.n_layers = 2;
      cfg.attn.block = 8;
      cfg.attn.stride = 4;
      cfg.attn.overlap = true;
      cfg.attn.placement = AttnPlacement::penultimate;
      TinyUnet model = build_tiny_unet(cfg, run.seed);
      TrainConfig tc;
      tc.lr = lr;
      tc.epochs = epochs;
      tc.seed = run.seed;
      std::vector<TrainSample> local = train_samples;
      train(model, local, tc);
      const auto res = pipeline::evaluate_dataset(&model, test_samples, st);
      run.dsc = res.mean_dsc;
      run.severe = pipeline::mean_dsc_for_severity(res, phantom::Severity::severe);
    }
  };
  const unsigned workers = std::min(2u, std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  bool reach_ok = true;
  int severe_wins = 0;
  std::ostringstream d;
  d.setf(std::ios::fixed);
  d.precision(3);
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const Run* nb = nullptr;
    const Run* plain = nullptr;
    for (const auto& r : runs) {
      if (r.seed != seed) continue;
      (r.attention ? nb : plain) = &r;
    }
    reach_ok &= nb->dsc >= 0.85;
    severe_wins += nb->severe >= plain->severe;
    d << " seed" << seed << ": dsc " << nb->dsc << " vs " << plain->dsc << ", severe " << nb->severe
      << " vs " << plain->severe << ";";
  }
  const bool ok = reach_ok && severe_wins >= 3;
  std::ostringstream head;
  head << "lr 2e-3, 18 epochs (<=20), blocked-attention wins severe stratum " << severe_wins << "/4;";
  record("criterion 8 desk-scale learning", ok, head.str() + d.str(), t0);
}

// --- criterion 9 -------------------------------------------------------------

void criterion_ablation() {
  const auto t0 = Clock::now();
  const fs::path dir = work_dir("ablate");
  // reduced scale recorded in the CSV columns: 48x48 images, 64 train
  // samples, 6 epochs per cell
  const int rc = run_cli("ablate --out " + dir.string() + " --set train.lr=2e-3", dir / "cli.log");
  if (rc != 0) {
    record("criterion 9 ablation grid", false, "ablate command exited " + std::to_string(rc), t0);
    return;
  }
  std::ifstream is(dir / "ablation.csv");
  std::string line;
  std::getline(is, line);  // header
  struct Row {
    int layers, block, stride;
    bool overlap;
    std::string placement;
    double dsc;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    Row r;
    std::getline(ss, f, ',');
    r.layers = std::stoi(f);
    std::getline(ss, r.placement, ',');
    std::getline(ss, f, ',');
    r.block = std::stoi(f);
    std::getline(ss, f, ',');
    r.stride = std::stoi(f);
    std::getline(ss, f, ',');
    r.overlap = f == "true";
    std::getline(ss, f, ',');
    r.dsc = std::stod(f);
    rows.push_back(r);
  }
  const bool complete = rows.size() == 36;  // 3 layer counts × 2 placements × 3 blocks × 2 modes
  int wins = 0;
  std::ostringstream d;
  d.setf(std::ios::fixed);
  d.precision(3);
  for (int block : {6, 8, 12}) {
    double ov = -1, nov = -1;
    for (const auto& r : rows)
      if (r.layers == 2 && r.placement == "penultimate" && r.block == block)
        (r.overlap ? ov : nov) = r.dsc;
    if (ov >= nov) ++wins;
    d << " B=" << block << ": overlap " << ov << " vs non-overlap " << nov << ";";
  }
  const bool ok = complete && wins >= 2;
  std::ostringstream head;
  head << rows.size() << "/36 cells (48x48, 6 epochs, 64 train — reduced scale), overlap >= non-overlap for "
       << wins << "/3 block sizes;";
  record("criterion 9 ablation grid", ok, head.str() + d.str(), t0);
}

// --- criterion 10 ------------------------------------------------------------

void criterion_determinism() {
  const auto t0 = Clock::now();
  const fs::path dir = work_dir("determinism");
  const std::string data_dir = (dir / "data").string();
  const std::string common = " --set data.dir=" + data_dir +
                             " --set data.n_train=12 --set data.n_test=6 --set data.h=32 --set data.w=32"
                             " --set data.classes=4 --set attn.block=4 --set attn.stride=2"
                             " --set train.epochs=2";
  bool ok = true;
  std::string why = "train/eval/bench reruns byte-identical from config.lock; selfcheck exit 0";

  ok &= run_cli("gen" + common, dir / "gen1.log") == 0;
  const std::string manifest_first = slurp(fs::path(data_dir) / "manifest_train.csv");
  const std::string sample_first = slurp(fs::path(data_dir) / "train_0000.tns");
  ok &= run_cli("gen" + common, dir / "gen2.log") == 0;
  ok &= slurp(fs::path(data_dir) / "manifest_train.csv") == manifest_first;
  ok &= slurp(fs::path(data_dir) / "train_0000.tns") == sample_first;
  if (!ok) why = "regenerated dataset differs";

  const std::string lock = (fs::path(data_dir) / "config.lock").string();
  if (ok) {
    ok &= run_cli("train --config " + lock + " --out " + (dir / "run1").string(), dir / "train1.log") == 0;
    ok &= run_cli("train --config " + lock + " --out " + (dir / "run2").string(), dir / "train2.log") == 0;
    const std::string a = slurp(dir / "run1" / "model.ckpt");
    const std::string b = slurp(dir / "run2" / "model.ckpt");
    ok &= !a.empty() && a == b;
    ok &= slurp(dir / "run1" / "loss.csv") == slurp(dir / "run2" / "loss.csv");
    if (!ok) why = "checkpoints from identical config.lock differ";
  }
  if (ok) {
    const std::string ckpt = (dir / "run1" / "model.ckpt").string();
    const std::string eval_args = " --config " + lock + " --set eval.checkpoint=" + ckpt;
    ok &= run_cli("eval" + eval_args + " --out " + (dir / "eval1").string(), dir / "eval1.log") == 0;
    ok &= run_cli("eval" + eval_args + " --out " + (dir / "eval2").string(), dir / "eval2.log") == 0;
    ok &= slurp(dir / "eval1" / "metrics.csv") == slurp(dir / "eval2" / "metrics.csv");
    ok &= slurp(dir / "eval1" / "summary.json") == slurp(dir / "eval2" / "summary.json");
    ok &= run_cli("bench --out " + (dir / "bench1").string(), dir / "bench1.log") == 0;
    ok &= run_cli("bench --out " + (dir / "bench2").string(), dir / "bench2.log") == 0;
    ok &= slurp(dir / "bench1" / "bench.csv") == slurp(dir / "bench2" / "bench.csv");
    if (!ok) why = "eval or bench outputs not reproducible";
  }
  if (ok) {
    const int rc = run_cli("selfcheck --out " + (dir / "selfcheck").string(), dir / "selfcheck.log");
    ok &= rc == 0;
    if (rc != 0) why = "selfcheck exited " + std::to_string(rc);
    // the mutation fixture must be caught and named
    const int rc2 = run_cli("selfcheck --out " + (dir / "selfcheck2").string() +
                                " --set selfcheck.inject=neg_logit_scale",
                            dir / "selfcheck2.log");
    const std::string log = slurp(dir / "selfcheck2.log");
    ok &= rc2 != 0 && log.find("full_sa_gradcheck") != std::string::npos;
    if (rc2 == 0) why = "injected logit-scale sign flip went undetected";
  }
  record("criterion 10 determinism and selfcheck", ok, why, t0);
}

}  // namespace

int main(int argc, char** argv) {
  std::string group = "all";
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--group") group = argv[i + 1];

  if (group == "oracles" || group == "all") {
    criterion_degenerate();
    criterion_gradients();
    criterion_skew();
    criterion_support_reach();
    criterion_complexity();
    criterion_metric_oracles();
    criterion_dvh();
  }
  if (group == "learning" || group == "all") criterion_learning();
  if (group == "ablation" || group == "all") criterion_ablation();
  if (group == "determinism" || group == "all") criterion_determinism();

  int failed = 0;
  for (const auto& r : g_results) failed += !r.pass;
  std::cout << (failed ? "ACCEPTANCE FAILED: " : "ACCEPTANCE OK: ") << (g_results.size() - failed) << "/"
            << g_results.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
