// Command-line front end: data synthesis, the two training phases,
// enhancement of raw files and sequences, metric tables and the gradient suite.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "lowlight/harness.hpp"

namespace fs = std::filesystem;
using namespace lowlight;
using namespace lowlight::harness;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool paper_scale = false;
};

void add_common(CLI::App* app, Common& c, const std::string& seed_help, const std::string& out_help) {
  app->add_option("--config", c.config, "key = value settings file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, seed_help);
  app->add_option("--out", c.out, out_help);
  app->add_flag("--paper-scale", c.paper_scale, "512 x 512 patches and 300 / 100 epochs");
}

RunConfig load_run_config(const Common& c) {
  RunConfig rc;
  if (c.paper_scale) apply_paper_scale(rc);
  if (!c.config.empty()) apply_config_file(rc, c.config);
  return rc;
}

std::string require_out(const Common& c, const char* what) {
  if (c.out.empty()) throw CLI::ValidationError("--out", std::string("required: ") + what);
  return c.out;
}

json stats_to_json(const cond::NormStats& s) {
  return {{"version", s.version},
          {"channel_mean", s.channel_mean},
          {"channel_std", s.channel_std},
          {"iev_mean", s.iev_mean},
          {"iev_std", s.iev_std}};
}

cond::NormStats stats_from_json(const json& j) {
  cond::NormStats s;
  s.version = j.at("version").get<std::uint32_t>();
  if (s.version != cond::NormStats::kVersion) throw std::runtime_error("stats file: unsupported version");
  s.channel_mean = j.at("channel_mean").get<std::array<double, 4>>();
  s.channel_std = j.at("channel_std").get<std::array<double, 4>>();
  s.iev_mean = j.at("iev_mean").get<std::array<double, cond::kIevSize>>();
  s.iev_std = j.at("iev_std").get<std::array<double, cond::kIevSize>>();
  return s;
}

cond::NormStats load_stats(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open stats file " + path.string());
  return stats_from_json(json::parse(is));
}

struct Data {
  std::vector<synth::ImageGroup> train, validation;
};

Data load_split(const fs::path& dir, const TrainConfig& tc) {
  auto groups = synth::read_dataset(dir);
  const Split s = split_groups(groups.size(), tc.validation_fraction, tc.split_seed);
  Data d;
  for (std::size_t i : s.train) d.train.push_back(std::move(groups[i]));
  for (std::size_t i : s.validation) d.validation.push_back(std::move(groups[i]));
  return d;
}

fs::path data_dir(const std::string& flag, const fs::path& configured, const char* what) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  throw CLI::ValidationError("--data", std::string("required: ") + what + " (or set it in --config)");
}

void write_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  os << "epoch,learning_rate,train_mean,train_std,validation\n" << std::setprecision(10);
  for (const EpochLog& e : log)
    os << e.epoch + 1 << ',' << e.learning_rate << ',' << e.train_mean << ',' << e.train_std << ',' << e.validation
       << '\n';
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

std::vector<fs::path> cidraw_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cidraw") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .cidraw files in " + dir.string());
  return files;
}

// Sorted input.
double median(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string seconds_since(std::chrono::steady_clock::time_point t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1)
     << std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count() << " s";
  return os.str();
}

// --- subcommands --------------------------------------------------------------

struct GenData {
  Common common;
  std::optional<std::size_t> groups, test_groups;
};

int run_gen_data(const GenData& a) {
  RunConfig rc = load_run_config(a.common);
  if (a.common.seed) rc.synth.seed = *a.common.seed;
  if (a.groups) rc.synth.groups = *a.groups;
  if (a.test_groups) rc.test_groups = *a.test_groups;
  const fs::path out = require_out(a.common, "dataset directory");
  const auto t = std::chrono::steady_clock::now();
  synth::write_dataset(out / "train", synth::generate_dataset(rc.synth));
  if (rc.test_groups > 0) {
    synth::write_dataset(out / "test", synth::generate_dataset(test_synth_config(rc)));
  }
  std::cout << "wrote " << rc.synth.groups << " training and " << rc.test_groups << " test groups to " << out.string()
            << " in " << seconds_since(t) << "\n";
  return 0;
}

struct FitStats {
  Common common;
  std::string data;
};

int run_fit_stats(const FitStats& a) {
  RunConfig rc = load_run_config(a.common);
  if (a.common.seed) rc.train.split_seed = *a.common.seed;
  const Data d = load_split(data_dir(a.data, rc.train.train_dir, "training dataset"), rc.train);
  const cond::NormStats s = fit_stats(d.train);
  const fs::path out = require_out(a.common, "stats file (.json)");
  std::ofstream os(out);
  os << stats_to_json(s).dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write " + out.string());
  std::cout << "fitted normalization on " << d.train.size() << " training groups -> " << out.string() << "\n";
  return 0;
}

struct TrainEsn {
  Common common;
  std::string data, stats, log;
};

int run_train_esn(const TrainEsn& a) {
  RunConfig rc = load_run_config(a.common);
  if (a.common.seed) rc.train.esn_seed = *a.common.seed;
  const Data d = load_split(data_dir(a.data, rc.train.train_dir, "training dataset"), rc.train);
  const cond::NormStats stats = a.stats.empty() ? fit_stats(d.train) : load_stats(a.stats);
  const fs::path out = require_out(a.common, "checkpoint path");
  const auto t = std::chrono::steady_clock::now();
  const EsnRun run = train_esn(d.train, d.validation, stats, rc.train, &std::cout);

  Checkpoint c;
  c.esn_config = rc.train.esn_config();
  c.esn_params = to_stored_precision(run.params);
  c.stats = stats;
  c.provenance.split_seed = rc.train.split_seed;
  c.provenance.esn_seed = rc.train.esn_seed;
  c.provenance.esn_epochs = rc.train.esn_epochs;
  c.provenance.esn_final_train_mean = run.log.back().train_mean;
  c.provenance.esn_final_train_std = run.log.back().train_std;
  c.provenance.esn_final_validation = run.log.back().validation;
  save_checkpoint(out, c);
  if (!a.log.empty()) write_log(a.log, run.log);
  std::cout << "ESN trained in " << seconds_since(t) << " -> " << out.string() << "\n";
  return 0;
}

struct TrainBpn {
  Common common;
  std::string data, checkpoint, log;
};

int run_train_bpn(const TrainBpn& a) {
  RunConfig rc = load_run_config(a.common);
  if (a.common.seed) rc.train.bpn_seed = *a.common.seed;
  const Data d = load_split(data_dir(a.data, rc.train.train_dir, "training dataset"), rc.train);
  Checkpoint c = load_checkpoint(a.checkpoint);
  const fs::path out = require_out(a.common, "checkpoint path");
  const auto t = std::chrono::steady_clock::now();
  const std::uint64_t before = c.esn_params.digest();
  const BpnRun run = train_bpn(d.train, d.validation, c, rc.train, &std::cout);
  if (c.esn_params.digest() != before) throw std::logic_error("ESN parameters changed during the BPN phase");

  c.bpn_config = rc.train.bpn_config();
  c.bpn_params = to_stored_precision(run.params);
  c.provenance.bpn_seed = rc.train.bpn_seed;
  c.provenance.bpn_epochs = rc.train.bpn_epochs;
  c.provenance.bpn_final_train_mean = run.log.back().train_mean;
  save_checkpoint(out, c);
  if (!a.log.empty()) write_log(a.log, run.log);
  std::cout << "BPN trained in " << seconds_since(t) << " (ESN digest " << std::hex << before << std::dec
            << " unchanged) -> " << out.string() << "\n";
  return 0;
}

struct Enhance {
  Common common;
  std::string file, checkpoint;
  std::optional<double> t1;
};

int run_enhance(const Enhance& a) {
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const raw::RawFrame frame = raw::load_cidraw(a.file);
  const fs::path out = require_out(a.common, "output .ppm");
  const auto t = std::chrono::steady_clock::now();
  Enhanced e;
  if (a.t1) {
    e.t1 = *a.t1;
    e.rgb = enhance_with_time(frame, c, e.t1);
  } else {
    e = evaluate(frame, c);
  }
  save_ppm(out, e.rgb);
  std::cout << std::setprecision(10) << "t0 " << frame.meta.exposure_time << " s  t1 " << e.t1 << " s  ("
            << seconds_since(t) << ") -> " << out.string() << "\n";
  return 0;
}

struct EnhanceSeq {
  Common common;
  std::string dir, checkpoint, filter = "identity";
  double beta = 0.5;
};

int run_enhance_seq(const EnhanceSeq& a) {
  const Checkpoint c = load_checkpoint(a.checkpoint);
  const auto files = cidraw_files(a.dir);
  std::vector<raw::RawFrame> frames;
  for (const auto& f : files) frames.push_back(raw::load_cidraw(f));
  const fs::path out = require_out(a.common, "output directory");
  const SequenceResult r = enhance_sequence(frames, c, metrics::parse_filter_mode(a.filter), a.beta);
  fs::create_directories(out);
  std::ofstream csv(out / "t1.csv");
  csv << "index,file,t0,t1_raw,t1_filtered\n" << std::setprecision(10);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string stem = files[i].stem().string();
    save_ppm(out / (stem + ".ppm"), r.frames[i]);
    csv << i << ',' << files[i].filename().string() << ',' << frames[i].meta.exposure_time << ',' << r.t1_raw[i] << ','
        << r.t1_filtered[i] << '\n';
  }
  std::cout << "enhanced " << frames.size() << " frames (" << a.filter << ") -> " << out.string() << "\n";
  return 0;
}

struct EvalMetrics {
  Common common;
  std::string dir, checkpoint;
};

int run_eval_metrics(const EvalMetrics& a) {
  const auto groups = synth::read_dataset(a.dir);
  std::optional<Checkpoint> c;
  if (!a.checkpoint.empty()) c = load_checkpoint(a.checkpoint);
  const fs::path out = require_out(a.common, "output directory for images.csv and groups.csv");
  fs::create_directories(out);
  std::ofstream images(out / "images.csv"), table(out / "groups.csv");
  images << std::setprecision(8);
  table << std::setprecision(8);
  images << "group,frame,t0,t1,brightness_in,nv_in,entropy_in,brightness_out,nv_out,entropy_out\n";
  table << "group,inputs,mu_in,cv_in,mu_out,cv_out\n";
  std::size_t improved = 0, rows = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    std::vector<double> b_in, b_out;
    for (std::size_t k : groups[gi].eligible_inputs()) {
      const raw::RawFrame& f = groups[gi].frames[k];
      const Tensor in = raw::raw_to_rgb_reference(f);
      b_in.push_back(raw::brightness(in));
      images << gi << ',' << k << ',' << f.meta.exposure_time << ',';
      if (c) {
        const Enhanced e = evaluate(f, *c);
        b_out.push_back(raw::brightness(e.rgb));
        images << e.t1 << ',' << b_in.back() << ',' << metrics::noise_variance(in) << ',' << metrics::entropy(in) << ','
               << b_out.back() << ',' << metrics::noise_variance(e.rgb) << ',' << metrics::entropy(e.rgb) << '\n';
      } else {
        images << ',' << b_in.back() << ',' << metrics::noise_variance(in) << ',' << metrics::entropy(in) << ",,,\n";
      }
    }
    if (b_in.size() < 2) continue;
    const auto pre = metrics::group_brightness_stats_of(b_in);
    table << gi << ',' << b_in.size() << ',' << pre.mu << ',' << pre.cv << ',';
    if (c) {
      const auto post = metrics::group_brightness_stats_of(b_out);
      table << post.mu << ',' << post.cv << '\n';
      improved += post.cv < pre.cv;
    } else {
      table << ",\n";
    }
    ++rows;
  }
  std::cout << "metrics for " << groups.size() << " groups -> " << out.string();
  if (c) std::cout << "; CV reduced on " << improved << "/" << rows << " groups";
  std::cout << " (synthetic benchmark)\n";
  return 0;
}

struct GradCheck {
  Common common;
  std::size_t instances = 20;
};

int run_grad_check(const GradCheck& a) {
  const auto t = std::chrono::steady_clock::now();
  const auto rows = run_gradient_suite(a.instances, a.common.seed.value_or(0));
  std::ostringstream csv;
  csv << "name,instances,max_relative_error,bound,passed\n";
  bool ok = true;
  for (const auto& r : rows) {
    csv << r.name << ',' << r.instances << ',' << std::setprecision(4) << r.worst << ',' << r.bound << ','
        << (r.passed() ? "yes" : "no") << '\n';
    ok = ok && r.passed();
  }
  if (!a.common.out.empty()) {
    std::ofstream os(a.common.out);
    os << csv.str();
  }
  std::cout << csv.str() << (ok ? "all gradients match" : "GRADIENT MISMATCH") << " (" << seconds_since(t) << ")\n";
  return ok ? 0 : 1;
}

struct Ablate {
  Common common;
  std::string data, test, checkpoint;
};

int run_ablate(const Ablate& a) {
  RunConfig rc = load_run_config(a.common);
  if (a.common.seed) rc.train.bpn_seed = *a.common.seed;
  const Data d = load_split(data_dir(a.data, rc.train.train_dir, "training dataset"), rc.train);
  const fs::path test_dir = !a.test.empty() ? fs::path(a.test) : rc.train.test_dir;
  const std::vector<synth::ImageGroup> held_out = test_dir.empty() ? d.validation : synth::read_dataset(test_dir);
  Checkpoint lbp = load_checkpoint(a.checkpoint);
  if (!lbp.bpn_config) {
    std::cout << "checkpoint has no BPN; training it with L_BP first\n";
    const BpnRun run = train_bpn(d.train, d.validation, lbp, rc.train, &std::cout);
    lbp.bpn_config = rc.train.bpn_config();
    lbp.bpn_params = to_stored_precision(run.params);
  }
  const BpnRun direct = train_bpn_direct(d.train, d.validation, lbp, rc.train, &std::cout);
  Checkpoint reg = lbp;
  reg.bpn_params = to_stored_precision(direct.params);

  std::ostringstream csv;
  csv << "model,groups,log_time_rmse,mean_cv_out,median_cv_out,cv_reduced_fraction\n" << std::setprecision(6);
  for (const auto& [name, ckpt] : {std::pair<const char*, const Checkpoint*>{"l_bp", &lbp}, {"direct", &reg}}) {
    double se = 0.0;
    std::size_t n = 0;
    for (const auto& g : held_out)
      for (std::size_t k : g.eligible_inputs()) {
        const double e = std::log(predict_t1(g.frames[k], *ckpt)) - std::log(g.t_g());
        se += e * e;
        ++n;
      }
    const auto ev = evaluate_groups(held_out, *ckpt);
    std::vector<double> cv;
    std::size_t reduced = 0;
    for (const auto& g : ev) {
      cv.push_back(g.post.cv);
      reduced += g.post.cv < g.pre.cv;
    }
    std::sort(cv.begin(), cv.end());
    double mean = 0.0;
    for (double v : cv) mean += v;
    csv << name << ',' << ev.size() << ',' << std::sqrt(se / static_cast<double>(std::max<std::size_t>(n, 1))) << ','
        << (cv.empty() ? 0.0 : mean / static_cast<double>(cv.size())) << ',' << median(cv)
        << ',' << (ev.empty() ? 0.0 : static_cast<double>(reduced) / static_cast<double>(ev.size())) << '\n';
  }
  if (!a.common.out.empty()) {
    std::ofstream os(a.common.out);
    os << csv.str();
  }
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-light raw enhancement: exposure shifting (ESN) guided by a brightness prediction network (BPN)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lowlight 1.0");

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Synthesize multi-exposure raw groups (DIR/train and DIR/test)");
  add_common(gen_cmd, gen.common, "data seed", "dataset directory");
  gen_cmd->add_option("--groups", gen.groups, "training groups");
  gen_cmd->add_option("--test-groups", gen.test_groups, "held-out test groups");

  FitStats fit;
  auto* fit_cmd = app.add_subcommand("fit-stats", "Fit input normalization on the training split");
  add_common(fit_cmd, fit.common, "split seed", "stats file (.json)");
  fit_cmd->add_option("--data", fit.data, "training dataset directory (group_NNNN folders)");

  TrainEsn esn;
  auto* esn_cmd = app.add_subcommand("train-esn", "Train the exposure shifting network");
  add_common(esn_cmd, esn.common, "ESN initialization and sampling seed", "checkpoint path");
  esn_cmd->add_option("--data", esn.data, "training dataset directory");
  esn_cmd->add_option("--stats", esn.stats, "stats file from fit-stats (fitted on the fly if omitted)");
  esn_cmd->add_option("--log", esn.log, "per-epoch CSV log");

  TrainBpn bpn;
  auto* bpn_cmd = app.add_subcommand("train-bpn", "Train the brightness prediction network through the frozen ESN");
  add_common(bpn_cmd, bpn.common, "BPN initialization and sampling seed", "checkpoint path");
  bpn_cmd->add_option("--data", bpn.data, "training dataset directory");
  bpn_cmd->add_option("--checkpoint", bpn.checkpoint, "ESN checkpoint from train-esn")->required();
  bpn_cmd->add_option("--log", bpn.log, "per-epoch CSV log");

  Enhance enh;
  auto* enh_cmd = app.add_subcommand("enhance", "Enhance one raw file to a PPM image");
  add_common(enh_cmd, enh.common, "unused", "output .ppm");
  enh_cmd->add_option("file", enh.file, "input .cidraw")->required()->check(CLI::ExistingFile);
  enh_cmd->add_option("--checkpoint", enh.checkpoint, "trained checkpoint")->required();
  enh_cmd->add_option("--t1", enh.t1, "guideline time in seconds (ESN only; skips the BPN)");

  EnhanceSeq seq;
  auto* seq_cmd = app.add_subcommand("enhance-seq", "Enhance a burst of raw files with a t1 filter");
  add_common(seq_cmd, seq.common, "unused", "output directory (PPMs and t1.csv)");
  seq_cmd->add_option("dir", seq.dir, "directory of .cidraw files, processed in name order")->required();
  seq_cmd->add_option("--checkpoint", seq.checkpoint, "trained checkpoint")->required();
  seq_cmd->add_option("--filter", seq.filter, "t1 filter: identity or ema")->check(CLI::IsMember({"identity", "ema"}));
  seq_cmd->add_option("--beta", seq.beta, "ema smoothing factor in [0, 1]")->check(CLI::Range(0.0, 1.0));

  EvalMetrics ev;
  auto* ev_cmd = app.add_subcommand("eval-metrics", "Brightness, CV, noise and entropy tables for a dataset");
  add_common(ev_cmd, ev.common, "unused", "output directory (images.csv, groups.csv)");
  ev_cmd->add_option("dir", ev.dir, "dataset directory (group_NNNN folders)")->required();
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "trained checkpoint; input-only metrics when omitted");

  GradCheck gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  add_common(gc_cmd, gc.common, "point seed", "CSV report");
  gc_cmd->add_option("--instances", gc.instances, "random points per function");

  Ablate ab;
  auto* ab_cmd = app.add_subcommand("ablate-direct-bpn", "Compare L_BP training against direct t_g regression");
  add_common(ab_cmd, ab.common, "BPN seed", "CSV report");
  ab_cmd->add_option("--data", ab.data, "training dataset directory");
  ab_cmd->add_option("--test", ab.test, "held-out dataset (validation split if omitted)");
  ab_cmd->add_option("--checkpoint", ab.checkpoint, "ESN or full checkpoint")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*fit_cmd) return run_fit_stats(fit);
    if (*esn_cmd) return run_train_esn(esn);
    if (*bpn_cmd) return run_train_bpn(bpn);
    if (*enh_cmd) return run_enhance(enh);
    if (*seq_cmd) return run_enhance_seq(seq);
    if (*ev_cmd) return run_eval_metrics(ev);
    if (*gc_cmd) return run_grad_check(gc);
    if (*ab_cmd) return run_ablate(ab);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
