// Acceptance run: one PASS/FAIL line per criterion. argv[1] is the lowlight
// CLI used by the determinism check; further arguments select criteria by
// number. Criteria 4-6 share one desk-scale run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "lowlight/autodiff/ops.hpp"
#include "lowlight/bpn.hpp"
#include "lowlight/harness.hpp"
#include "lowlight/metrics.hpp"
#include "lowlight/rawproc.hpp"
#include "lowlight/synthcam.hpp"

namespace fs = std::filesystem;
using namespace lowlight;
using namespace lowlight::harness;
using ad::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// --- 1 ----------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t = std::chrono::steady_clock::now();
  const auto rows = run_gradient_suite(20, 0);
  const double secs = seconds_since(t);
  bool ok = secs < 120.0;
  std::string worst_name;
  double worst_ratio = 0.0;
  for (const auto& r : rows) {
    ok = ok && r.passed() && r.instances == 20;
    if (r.worst / r.bound >= worst_ratio) {
      worst_ratio = r.worst / r.bound;
      worst_name = r.name;
    }
  }
  return {ok, fmt("%zu functions x 20 instances, closest to its bound: %s (%.2g of bound), %.1f s", rows.size(),
                  worst_name.c_str(), worst_ratio, secs)};
}

// --- 2 ----------------------------------------------------------------------------

Outcome aoi_closed_forms() {
  const bpn::BpnConfig c;
  double uniform_err = 0.0;
  bool exact_half = true;
  for (auto [m, n] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 2}, {7, 5}, {32, 32}})
    for (double level : {0.0, 0.25, 0.5, 0.9}) {
      const Tensor w = bpn::aoi_weight_map(Tensor::full({1, m, n}, level), c.mu_w, c.sigma_w_sq);
      const double mn = static_cast<double>(m * n);
      for (double v : w.values()) uniform_err = std::max(uniform_err, std::fabs(v - 1.0 / mn));
      const double l = bpn::loss_bp(Tensor::full({1, m, n}, 0.5), w, c.mu_w, c.sigma_v_sq).item();
      exact_half = exact_half && l == -1.0 / mn;
    }
  // two pixels (0.5, 0.0): unnormalized (1, exp(-12.5))
  const Tensor w2 = bpn::aoi_weight_map(Tensor({1, 1, 2}, {0.5, 0.0}), c.mu_w, c.sigma_w_sq);
  const double e = std::exp(-12.5);
  const double two_err = std::max(std::fabs(w2[0] - 1.0 / (1.0 + e)), std::fabs(w2[1] - e / (1.0 + e)));
  // one pixel, est 0: -exp(-0.25 / 0.08)
  const double one = bpn::loss_bp(Tensor({1, 1, 1}, {0.0}), Tensor({1, 1, 1}, {1.0}), c.mu_w, c.sigma_v_sq).item();
  const double one_err = std::fabs(one + std::exp(-3.125));
  const bool ok = uniform_err <= 1e-12 && exact_half && two_err <= 1e-9 && one_err <= 1e-9;
  return {ok, fmt("uniform map error %.2g, L_BP(0.5) exact: %s, two-pixel error %.2g (w = %.7f, %.3g), "
                  "one-pixel L_BP %.5f",
                  uniform_err, exact_half ? "yes" : "no", two_err, w2[0], w2[1], one)};
}

// --- 3 ----------------------------------------------------------------------------

Outcome exposure_law() {
  synth::SensorModel quiet;
  quiet.read_noise_sd = 0.0;
  quiet.shot_noise_gain = 0.0;
  const synth::Scene scene = synth::synth_scene(3, 64, 64, 1.0);
  raw::ExifMeta meta;
  std::size_t violations = 0, rgb_violations = 0;
  raw::RawFrame prev;
  Tensor prev_rgb;
  for (int i = 0; i < 48; ++i) {
    const double t = 1e-3 * std::pow(10.0, i / 12.0);  // 1 ms to ~9 s
    meta.exposure_time = static_cast<float>(t);
    const raw::RawFrame f = synth::expose(scene, t, quiet, meta, 0);
    const Tensor rgb = raw::raw_to_rgb_reference(f);
    if (i > 0) {
      for (std::size_t k = 0; k < f.counts.size(); ++k) violations += f.counts[k] < prev.counts[k];
      const auto a = prev_rgb.values();
      const auto b = rgb.values();
      for (std::size_t k = 0; k < a.size(); ++k) rgb_violations += b[k] < a[k];
    }
    prev = f;
    prev_rgb = rgb;
  }
  double shift_err = 0.0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> log_r(-8.0, 4.0), log_t(-9.0, 3.0);
  for (int i = 0; i < 100000; ++i) {
    const double r = std::exp(log_r(rng)), t = std::exp(log_t(rng));
    shift_err = std::max(shift_err, std::fabs(std::log(synth::exposure(r, 2 * t)) -
                                              (std::log(synth::exposure(r, t)) + std::log(2.0))));
  }
  const bool ok = violations == 0 && rgb_violations == 0 && shift_err <= 1e-12;
  return {ok, fmt("48 exposures, decreasing sites %zu (counts) / %zu (reference RGB); log-shift error %.2g", violations,
                  rgb_violations, shift_err)};
}

// --- 4, 5, 6 ----------------------------------------------------------------------

struct DeskRun {
  Outcome esn, bpn, association;
};

DeskRun desk_run() {
  const RunConfig rc;
  const auto t_all = std::chrono::steady_clock::now();
  const auto all = synth::generate_dataset(rc.synth);
  const auto test = synth::generate_dataset(test_synth_config(rc));
  const Split split = split_groups(all.size(), rc.train.validation_fraction, rc.train.split_seed);
  std::vector<synth::ImageGroup> train, validation;
  for (std::size_t i : split.train) train.push_back(all[i]);
  for (std::size_t i : split.validation) validation.push_back(all[i]);
  std::cout << "desk run: " << train.size() << " training, " << validation.size() << " validation, " << test.size()
            << " test groups\n";

  DeskRun out;
  const auto t_esn = std::chrono::steady_clock::now();
  Checkpoint c;
  c.stats = fit_stats(train);
  const EsnRun esn = train_esn(train, validation, c.stats, rc.train, &std::cout);
  const double esn_secs = seconds_since(t_esn);
  const double first = esn.log.front().validation, last = esn.log.back().validation;
  out.esn = {last <= 0.5 * first && esn_secs < 900.0,
             fmt("held-out L_ES epoch 1 %.4f, epoch %zu %.4f (ratio %.1f%%, needs <= 50%%), %.0f s", first,
                 esn.log.size(), last, 100.0 * last / first, esn_secs)};

  c.esn_config = rc.train.esn_config();
  c.esn_params = to_stored_precision(esn.params);
  const std::uint64_t digest = c.esn_params.digest();
  const BpnRun bpn = train_bpn(train, validation, c, rc.train, &std::cout);
  const bool frozen = c.esn_params.digest() == digest;
  c.bpn_config = rc.train.bpn_config();
  c.bpn_params = to_stored_precision(bpn.params);

  const auto ev = evaluate_groups(test, c);
  std::size_t reduced = 0;
  std::vector<double> post;
  for (const auto& g : ev) {
    reduced += g.post.cv < g.pre.cv;
    post.push_back(g.post.cv);
  }
  std::sort(post.begin(), post.end());
  const double median = post.empty() ? NAN
                        : post.size() % 2 ? post[post.size() / 2]
                                          : 0.5 * (post[post.size() / 2 - 1] + post[post.size() / 2]);
  const double frac = ev.empty() ? 0.0 : static_cast<double>(reduced) / static_cast<double>(ev.size());
  out.bpn = {frozen && frac >= 0.7 && median < 0.29,
             fmt("ESN digest %s; CV reduced on %zu/%zu test groups (%.0f%%, needs >= 70%%), median post CV %.3f",
                 frozen ? "unchanged" : "CHANGED", reduced, ev.size(), 100.0 * frac, median)};

  std::vector<double> rho;
  const double assoc = t0_t1_association(test, c, &rho);
  const auto positive = std::count_if(rho.begin(), rho.end(), [](double r) { return r > 0.0; });
  out.association = {assoc > 0.0, fmt("mean Spearman(t0, t1) %.3f over %zu test sweeps (%td positive)", assoc,
                                      rho.size(), positive)};
  std::cout << "desk run total " << fmt("%.0f", seconds_since(t_all)) << " s\n";
  return out;
}

// --- 7 ----------------------------------------------------------------------------

Outcome metrics_checks() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.5, 0.05);
    std::vector<double> v(256 * 256);
    for (double& x : v) x = n(rng);
    worst = std::max(worst, std::fabs(metrics::noise_variance(Tensor({1, 256, 256}, std::move(v))) / 0.05 - 1.0));
  }
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<double> u(512 * 512);
  for (double& x : u) x = (byte(rng) + 0.5) / 256.0;
  const double h = metrics::entropy(Tensor({1, 512, 512}, std::move(u)));
  const Tensor flat = Tensor::full({3, 32, 32}, 0.37);
  const double nv0 = metrics::noise_variance(flat), h0 = metrics::entropy(flat);
  const bool ok = worst <= 0.2 && std::fabs(h - 8.0) <= 0.05 && nv0 == 0.0 && h0 == 0.0;
  return {ok, fmt("NV worst relative error %.1f%% over 20 seeds; uniform entropy %.4f bits; constant NV %g, entropy %g",
                  100.0 * worst, h, nv0, h0)};
}

// --- 8 ----------------------------------------------------------------------------

raw::RawFrame random_frame(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> half(1, 24);
  std::uniform_real_distribution<float> u(0.01f, 4.0f);
  raw::RawFrame f;
  f.width = 2 * half(rng);
  f.height = 2 * half(rng);
  f.black_level = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(0, 2048)(rng));
  f.white_level = static_cast<std::uint16_t>(std::uniform_int_distribution<int>(f.black_level + 1, 65535)(rng));
  std::uniform_int_distribution<int> count(0, 65535);
  f.counts.resize(std::size_t{f.width} * f.height);
  for (auto& c : f.counts) c = static_cast<std::uint16_t>(count(rng));
  f.meta.iso = 100.0f * u(rng);
  f.meta.exposure_time = 0.01f * u(rng);
  for (float& g : f.meta.wb_gains) g = u(rng);
  f.meta.aperture = rng() % 2 ? 0.0f : u(rng);
  return f;
}

Checkpoint random_checkpoint(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> pick(0, 1000);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  Checkpoint c;
  c.esn_config.depth = 2 + pick(rng) % 2;
  c.esn_config.base_channels = 4 + pick(rng) % 3;
  c.esn_config.leaky_slope = 0.1 * u(rng);
  c.esn_params = to_stored_precision(esn::esn_init(c.esn_config, rng()));
  for (std::size_t i = 0; i < 4; ++i) {
    c.stats.channel_mean[i] = u(rng);
    c.stats.channel_std[i] = u(rng);
  }
  for (std::size_t i = 0; i < cond::kIevSize; ++i) {
    c.stats.iev_mean[i] = u(rng) - 1.0;
    c.stats.iev_std[i] = u(rng);
  }
  if (rng() % 2) {
    bpn::BpnConfig b;
    b.input_extent = 16;
    b.stage_channels.assign(1 + pick(rng) % 3, 0);
    for (auto& s : b.stage_channels) s = 2 + pick(rng) % 4;
    b.fc_widths.assign(pick(rng) % 3, 0);
    for (auto& w : b.fc_widths) w = 2 + pick(rng) % 5;
    b.mu_w = 0.3 + 0.4 * u(rng) / 3.0;
    c.bpn_params = to_stored_precision(bpn::bpn_init(b, rng(), -u(rng)));
    c.bpn_config = b;
  }
  c.provenance = {rng(), rng(), rng(), pick(rng), pick(rng), u(rng), u(rng), u(rng), -u(rng)};
  return c;
}

bool same_params(const ad::ParamSet& a, const ad::ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto va = a[i].value.values();
    const auto vb = b[i].value.values();
    if (a[i].name != b[i].name || a[i].value.shape() != b[i].value.shape() ||
        !std::equal(va.begin(), va.end(), vb.begin(), vb.end()))
      return false;
  }
  return true;
}

Outcome format_round_trips() {
  std::mt19937_64 rng(2024);
  std::size_t raw_bad = 0, ckpt_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const raw::RawFrame f = random_frame(rng);
    raw_bad += !(raw::read_cidraw(raw::write_cidraw(f)) == f);
  }
  for (int i = 0; i < 1000; ++i) {
    const Checkpoint c = random_checkpoint(rng);
    const auto bytes = serialize_checkpoint(c);
    const Checkpoint back = deserialize_checkpoint(bytes);
    const bool same = back.esn_config == c.esn_config && back.bpn_config == c.bpn_config && back.stats == c.stats &&
                      back.provenance == c.provenance && same_params(back.esn_params, c.esn_params) &&
                      same_params(back.bpn_params, c.bpn_params) && serialize_checkpoint(back) == bytes;
    ckpt_bad += !same;
  }
  const fs::path dir = fs::temp_directory_path() / "lowlight_acceptance_formats";
  fs::create_directories(dir);
  std::mt19937_64 canon_rng(7);
  save_checkpoint(dir / "a.ckpt", random_checkpoint(canon_rng));
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  const bool resave = file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt");
  fs::remove_all(dir);
  return {raw_bad == 0 && ckpt_bad == 0 && resave,
          fmt("CIDRAW mismatches %zu/1000, checkpoint mismatches %zu/1000, canonical re-save identical: %s", raw_bad,
              ckpt_bad, resave ? "yes" : "no")};
}

// --- 9 ----------------------------------------------------------------------------

constexpr const char* kTinyConfig = R"(# small enough for a quick end-to-end run
groups = 6
test_groups = 2
raw_extent = 96
data_seed = 3
esn_depth = 2
esn_base_channels = 4
patch_size = 16
bpn_input_extent = 16
esn_epochs = 3
bpn_epochs = 2
)";

bool run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  if (rc != 0) std::cout << "  command failed (" << rc << "): " << cmd << "\n";
  return rc == 0;
}

Outcome cli_determinism(const std::string& cli) {
  if (cli.empty()) return {false, "no CLI path given"};
  const fs::path root = fs::temp_directory_path() / "lowlight_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream os(root / "tiny.cfg");
    os << kTinyConfig;
  }
  const std::string cfg = " --config '" + (root / "tiny.cfg").string() + "'";
  fs::path input;
  for (const char* name : {"a", "b"}) {
    const fs::path d = root / name;
    const std::string q = "'" + d.string() + "'";
    const std::string data = "'" + (d / "data" / "train").string() + "'";
    bool ok = run("'" + cli + "' gen-data" + cfg + " --out " + q + "/data") &&
              run("'" + cli + "' fit-stats" + cfg + " --data " + data + " --out " + q + "/stats.json") &&
              run("'" + cli + "' train-esn" + cfg + " --data " + data + " --stats " + q + "/stats.json --out " + q +
                  "/esn.ckpt") &&
              run("'" + cli + "' train-bpn" + cfg + " --data " + data + " --checkpoint " + q + "/esn.ckpt --out " + q +
                  "/full.ckpt");
    if (!ok) return {false, "pipeline command failed"};
    input = d / "data" / "test" / "group_0000" / "frame_5.cidraw";
    if (!fs::exists(input)) {
      for (const auto& e : fs::directory_iterator(d / "data" / "test" / "group_0000"))
        if (e.path().extension() == ".cidraw") input = e.path();
    }
    if (!run("'" + cli + "' enhance '" + input.string() + "' --checkpoint " + q + "/full.ckpt --out " + q + "/out.ppm"))
      return {false, "enhance failed"};
  }
  std::size_t differing = 0;
  std::vector<std::string> compared;
  for (const char* f : {"stats.json", "esn.ckpt", "full.ckpt", "out.ppm"}) {
    const auto a = file_bytes(root / "a" / f), b = file_bytes(root / "b" / f);
    differing += a.empty() || a != b;
    compared.push_back(f);
  }
  for (const auto& e : fs::recursive_directory_iterator(root / "a" / "data")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    differing += file_bytes(e.path()) != file_bytes(root / "b" / rel);
  }
  fs::remove_all(root);
  return {differing == 0, fmt("two runs of gen-data, fit-stats, train-esn, train-bpn, enhance: %zu differing files",
                              differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.count(n); };
  std::vector<std::pair<std::string, Outcome>> results;
  auto record = [&](std::string name, Outcome o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail << std::endl;
    results.emplace_back(std::move(name), std::move(o));
  };
  auto guarded = [](const std::function<Outcome()>& f) -> Outcome {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("threw: ") + e.what()};
    }
  };

  if (wanted(1)) record("1 gradient suite", guarded(gradient_suite));
  if (wanted(2)) record("2 AoI and L_BP closed forms", guarded(aoi_closed_forms));
  if (wanted(3)) record("3 exposure law", guarded(exposure_law));
  if (wanted(4) || wanted(5) || wanted(6)) {
    DeskRun desk;
    try {
      desk = desk_run();
    } catch (const std::exception& e) {
      desk.esn = desk.bpn = desk.association = {false, std::string("desk run threw: ") + e.what()};
    }
    record("4 desk ESN training descent", desk.esn);
    record("5 desk BPN training after freezing", desk.bpn);
    record("6 t0-t1 association", desk.association);
  }
  if (wanted(7)) record("7 metrics", guarded(metrics_checks));
  if (wanted(8)) record("8 format round trips", guarded(format_round_trips));
  if (wanted(9)) record("9 pipeline determinism", guarded([&] { return cli_determinism(cli); }));

  std::cout << "\nsummary\n";
  std::size_t failed = 0;
  for (const auto& [name, o] : results) {
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "\n";
    failed += !o.pass;
  }
  std::cout << results.size() - failed << "/" << results.size() << " criteria met\n";
  return failed == 0 ? 0 : 1;
}
