#include "nbsa/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nbsa/error.hpp"

namespace nbsa {

const std::vector<RunConfig::KeyDef>& RunConfig::schema() {
  static const std::vector<KeyDef> defs = {
      {"seed", "42", "master seed; fixes data, initialization and sample order"},
      {"data.dir", "data", "dataset directory (written by gen, read by train/eval)"},
      {"data.h", "64", "phantom image height"},
      {"data.w", "64", "phantom image width"},
      {"data.classes", "5", "label count K (background + K-1 organs), 2..8"},
      {"data.n_train", "200", "training samples"},
      {"data.n_test", "50", "test samples"},
      {"data.p_none", "0.7", "fraction of artifact-free samples"},
      {"data.p_moderate", "0.2", "fraction with moderate streak artifacts"},
      {"data.p_severe", "0.1", "fraction with severe streak artifacts"},
      {"data.dropout", "", "comma-separated organ labels removed from every sample"},
      {"model.base_channels", "8", "U-net base feature width F"},
      {"attn.variant", "nbsa", "attention variant: none | full_sa | nbsa"},
      {"attn.layers", "2", "stacked attention layers (1..3)"},
      {"attn.block", "8", "memory block side B"},
      {"attn.stride", "4", "raster stride s; 0 derives it from attn.overlap"},
      {"attn.overlap", "true", "overlapping blocks (s<B) when stride is derived"},
      {"attn.relative", "false", "add learned relative-position logits inside blocks"},
      {"attn.placement", "penultimate", "insertion point: penultimate | last"},
      {"attn.channels", "0", "attention width d; 0 means max(1, C/2)"},
      {"attn.avg_aggregate", "false", "divide each pixel's block sum by its membership count"},
      {"train.lr", "0.0002", "ADAM learning rate"},
      {"train.epochs", "20", "training epochs"},
      {"train.batch", "1", "batch size (gradients averaged)"},
      {"eval.checkpoint", "", "checkpoint path to evaluate (required unless eval.passthrough)"},
      {"eval.tau", "1", "surface-DSC tolerance, in spacing units"},
      {"eval.spacing", "1", "physical units per pixel; scales hd95 and tau"},
      {"eval.passthrough", "false", "score ground-truth masks against themselves (pipeline oracle)"},
      {"eval.dose_target", "1", "organ label receiving the prescription dose"},
      {"eval.prescription", "70", "prescription dose in Gy"},
      {"eval.v_levels", "5,30", "Vx dose levels in Gy for the delta-Vx columns"},
      {"eval.dvh_bin", "0.5", "DVH bin width in Gy"},
      {"eval.dump_dvh", "false", "also write per-structure DVH curves as CSV"},
      {"bench.grid", "252x252 c64 d32 b36 s24 l2 nbsa; 252x252 c64 d32 b36 s24 l2 full_sa; 252x252 c64 d32 b36 s36 l2 nbsa; 64x64 c8 d4 b8 s4 l2 nbsa; 64x64 c8 d4 b8 s8 l2 nbsa; 64x64 c8 d4 b8 s4 l2 full_sa",
       "semicolon-separated rows: HxW cC dD bB sS lL variant (s==B means non-overlapping)"},
      {"bench.time", "false", "also time a forward pass per row (excluded from bitwise reproducibility)"},
      {"bench.time_cap", "2000000000", "skip timing rows above this flop count"},
      {"attmap.checkpoint", "", "checkpoint to visualize; empty builds a fresh seeded model"},
      {"attmap.layer", "1", "attention layer whose map is exported (1-based)"},
      {"attmap.row", "32", "query pixel row"},
      {"attmap.col", "32", "query pixel column"},
      {"attmap.sample_seed", "7", "phantom seed for the probe image"},
      {"attmap.severity", "severe", "probe severity: none | moderate | severe"},
      {"ablate.size", "48", "image side for the ablation grid"},
      {"ablate.n_train", "64", "training samples per grid cell"},
      {"ablate.n_test", "24", "test samples per grid cell"},
      {"ablate.epochs", "6", "epochs per grid cell"},
      {"ablate.blocks", "6,8,12", "block sides swept by the ablation"},
      {"ablate.layers", "1,2,3", "layer counts swept by the ablation"},
      {"selfcheck.inject", "", "fault injection for the mutation fixture (e.g. neg_logit_scale)"},
  };
  return defs;
}

std::string RunConfig::help_text() {
  std::ostringstream os;
  os << "configuration keys (key=value, '#' comments):\n";
  for (const auto& d : schema()) {
    os << "  " << d.key;
    if (d.def[0] != '\0') os << " (default " << d.def << ")";
    os << "\n      " << d.help << "\n";
  }
  return os.str();
}

RunConfig::RunConfig() {
  for (const auto& d : schema()) values_[d.key] = d.def;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown configuration key '" + key + "'");
  it->second = value;
}

void RunConfig::set_kv(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown configuration key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    size_t pos = 0;
    const int v = std::stoi(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("key '" + key + "' wants an integer, got '" + get(key) + "'");
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    size_t pos = 0;
    const unsigned long long v = std::stoull(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("key '" + key + "' wants an unsigned integer, got '" + get(key) + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    size_t pos = 0;
    const double v = std::stod(get(key), &pos);
    if (pos != get(key).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("key '" + key + "' wants a number, got '" + get(key) + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("key '" + key + "' wants a boolean, got '" + v + "'");
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("key '" + key + "' wants comma-separated integers, got '" + get(key) + "'");
    }
  }
  return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("key '" + key + "' wants comma-separated numbers, got '" + get(key) + "'");
    }
  }
  return out;
}

std::string RunConfig::lock_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
  return os.str();
}

void RunConfig::write_lock(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / "config.lock").string();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path);
  os << lock_text();
}

AttentionConfig RunConfig::attention() const {
  AttentionConfig a;
  const std::string& variant = get("attn.variant");
  if (variant == "none")
    a.variant = AttnVariant::none;
  else if (variant == "full_sa")
    a.variant = AttnVariant::full_sa;
  else if (variant == "nbsa")
    a.variant = AttnVariant::nbsa;
  else
    throw ValidationError("attn.variant must be none|full_sa|nbsa, got '" + variant + "'");
  a.n_layers = get_int("attn.layers");
  a.block = get_int("attn.block");
  a.stride = get_int("attn.stride");
  a.overlap = get_bool("attn.overlap");
  a.relative = get_bool("attn.relative");
  const std::string& place = get("attn.placement");
  if (place == "penultimate")
    a.placement = AttnPlacement::penultimate;
  else if (place == "last")
    a.placement = AttnPlacement::last;
  else
    throw ValidationError("attn.placement must be penultimate|last, got '" + place + "'");
  a.channels = get_int("attn.channels");
  a.avg_aggregate = get_bool("attn.avg_aggregate");
  return a;
}

}  // namespace nbsa
