// imexlab: generate Q-tips data, run field-of-view propagation demos, train
// and evaluate segmentation networks, and export stability reports.
//
// Exit codes: 0 success, 2 usage, 3 data/format, 4 numeric failure.

#include <CLI11.hpp>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "imex/fft.hpp"
#include "imex/io.hpp"
#include "imex/layers.hpp"
#include "imex/qtips.hpp"
#include "imex/stability.hpp"
#include "imex/train.hpp"

namespace fs = std::filesystem;
using namespace imex;

namespace {

constexpr double kDefaultAlpha = 5.0;  // demo default, the 1-10 band midpoint

std::string abspath(const std::string& p) { return fs::absolute(p).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output directory " + dir);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string manifest_get(const Manifest& m, const std::string& key) {
  for (const auto& [k, v] : m)
    if (k == key) return v;
  throw FormatError("manifest: missing key '" + key + "'");
}

// ------------------------------------------------------------- generate ---

struct GenerateOpts {
  int n = 1024;
  int val = 64;
  int size = 64;
  uint64_t seed = 0;
  std::string out = "qtips";
};

void run_generate(const GenerateOpts& o) {
  require(o.n > 0 && o.val > 0, "generate: sample counts must be positive");
  ensure_dir(o.out);
  const auto train_ds = qtips::generate(o.n, o.seed, o.size);
  const auto val_ds = qtips::generate(o.val, o.seed + 1, o.size);
  const std::string train_path = o.out + "/train.qtds";
  const std::string val_path = o.out + "/val.qtds";
  qtips::write_qtds(train_ds, train_path);
  qtips::write_qtds(val_ds, val_path);

  Manifest m;
  m.emplace_back("command", "generate");
  m.emplace_back("n", std::to_string(o.n));
  m.emplace_back("val", std::to_string(o.val));
  m.emplace_back("size", std::to_string(o.size));
  m.emplace_back("seed", std::to_string(o.seed));
  m.emplace_back("val_seed", std::to_string(o.seed + 1));
  m.emplace_back("format_version_qtds", "1");
  m.emplace_back("output.train", "train.qtds");
  m.emplace_back("output.val", "val.qtds");
  write_manifest(o.out + "/manifest.txt", m);
  std::cout << "wrote " << train_path << " (" << o.n << " samples), " << val_path << " ("
            << o.val << " samples)\n";
}

// ------------------------------------------------------------ propagate ---

struct PropagateOpts {
  std::string mode = "imex";
  int layers = 5;
  double h = 1.0;
  int size = 64;
  double eps = 1e-12;
  std::string out = "propagate";
};

void run_propagate(const PropagateOpts& o) {
  if (!is_power_of_two(o.size))
    throw ValueError("propagate: size must be a power of two, got " + std::to_string(o.size));
  require(o.layers >= 0, "propagate: layer count must be non-negative");
  require(o.h > 0.0, "propagate: h must be positive");
  require(o.eps > 0.0, "propagate: eps must be positive");
  const StepMode mode = step_mode_from_string(o.mode);
  ensure_dir(o.out);

  const NetworkSpec spec = propagation_demo_spec(mode, o.layers, o.h);
  const auto params = propagation_demo_params<float>(spec);
  const auto probe = receptive_field_probe_full<float>(spec, params, o.size, o.eps);

  Manifest m;
  m.emplace_back("command", "propagate");
  m.emplace_back("mode", o.mode);
  m.emplace_back("layers", std::to_string(o.layers));
  m.emplace_back("h", format_double(o.h));
  m.emplace_back("size", std::to_string(o.size));
  m.emplace_back("eps", format_double(o.eps));
  m.emplace_back("demo_seed", std::to_string(kDemoSeed));
  m.emplace_back("format_version_tnsr", "1");

  std::ofstream csv(o.out + "/coverage.csv");
  if (!csv) throw FormatError("cannot open coverage.csv for writing");
  csv << "layer,name,coverage,radius\n";
  for (size_t li = 0; li < probe.report.trace.size(); ++li) {
    const auto& cov = probe.report.trace[li];
    csv << li << "," << cov.name << "," << format_double(cov.coverage) << "," << cov.radius
        << "\n";
    char fname[64];
    std::snprintf(fname, sizeof(fname), "layer%02zu_%s.pgm", li, cov.name.c_str());
    const auto img = normalize_to_bytes(probe.response_maps[li]);
    write_pgm(o.out + "/" + fname, img.pixels, o.size, o.size);
    m.emplace_back(std::string("norm_range.") + fname,
                   format_double(img.lo) + " " + format_double(img.hi));
    m.emplace_back("output.image" + std::to_string(li), fname);
  }
  csv.close();
  write_tnsr_file(o.out + "/response.tnsr", probe.final_response);
  m.emplace_back("output.coverage", "coverage.csv");
  m.emplace_back("output.response", "response.tnsr");
  write_manifest(o.out + "/manifest.txt", m);

  std::cout << "final coverage " << probe.report.coverage_fraction << ", support radius "
            << probe.report.max_radius << " (" << probe.report.trace.size() << " trace entries)\n";
}

// ---------------------------------------------------------------- train ---

struct TrainOpts {
  std::string config;
  std::string data;
  int epochs = 200;
  double lr = 1e-3;
  int batch = 8;
  int64_t seed = -1;  // <0: take the config's seed
  std::string out = "run";
};

void run_train(const TrainOpts& o) {
  RunConfig cfg = parse_config(read_text_file(o.config));
  const auto ds_train = qtips::read_qtds(o.data + "/train.qtds");
  const auto ds_val = qtips::read_qtds(o.data + "/val.qtds");
  if (static_cast<int>(ds_train.meta.size) != cfg.size)
    throw FormatError("train: config size " + std::to_string(cfg.size) +
                      " does not match dataset size " + std::to_string(ds_train.meta.size));
  if (cfg.net.n_classes != static_cast<int>(ds_train.meta.n_classes))
    throw FormatError("train: config n_classes does not match dataset");
  require(cfg.net.input_channels == 1, "train: Q-tips data is single-channel");

  if (o.seed >= 0) cfg.seed = static_cast<uint64_t>(o.seed);
  TrainOptions topts;
  topts.epochs = o.epochs;
  topts.lr = o.lr;
  topts.batch = o.batch;
  topts.seed = cfg.seed;
  topts.init = cfg.init;

  ensure_dir(o.out);
  const TrainResult result = train(cfg.net, ds_train, ds_val, topts);

  const std::string ckpt_path = o.out + "/checkpoint.ckpt";
  write_ckpt(ckpt_path, cfg, result.params);

  std::ofstream csv(o.out + "/metrics.csv");
  if (!csv) throw FormatError("cannot open metrics.csv for writing");
  csv << "epoch,split,loss,miou,accuracy\n";
  for (const auto& rec : result.trace) {
    csv << rec.epoch << ",train," << format_double(rec.train.loss) << ","
        << format_double(rec.train.miou) << "," << format_double(rec.train.accuracy) << "\n";
    csv << rec.epoch << ",val," << format_double(rec.val.loss) << ","
        << format_double(rec.val.miou) << "," << format_double(rec.val.accuracy) << "\n";
  }
  csv.close();

  std::ofstream cfgout(o.out + "/config.txt");
  cfgout << render_config(cfg);
  cfgout.close();

  Manifest m;
  m.emplace_back("command", "train");
  m.emplace_back("config", abspath(o.out + "/config.txt"));
  m.emplace_back("data", abspath(o.data));
  m.emplace_back("epochs", std::to_string(o.epochs));
  m.emplace_back("lr", format_double(o.lr));
  m.emplace_back("batch", std::to_string(o.batch));
  m.emplace_back("seed", std::to_string(cfg.seed));
  m.emplace_back("format_version_ckpt", "1");
  m.emplace_back("output.checkpoint", "checkpoint.ckpt");
  m.emplace_back("output.metrics", "metrics.csv");
  m.emplace_back("output.config", "config.txt");
  write_manifest(o.out + "/manifest.txt", m);

  if (!result.trace.empty()) {
    const auto& last = result.trace.back();
    std::cout << "final: val loss " << last.val.loss << ", val mean IOU " << last.val.miou
              << ", val accuracy " << last.val.accuracy << "\n";
  }
  std::cout << "wrote " << ckpt_path << "\n";
}

// ----------------------------------------------------------------- eval ---

struct EvalOpts {
  std::string checkpoint;
  std::string data;
  std::string out;  // optional
};

void run_eval(const EvalOpts& o) {
  auto [cfg, params] = read_ckpt(o.checkpoint);
  const auto ds = qtips::read_qtds(o.data);
  if (static_cast<int>(ds.meta.size) != cfg.size)
    throw FormatError("eval: checkpoint size does not match dataset size");
  const std::vector<double> wd = class_weights(ds);
  const std::vector<float> weights(wd.begin(), wd.end());
  const Metrics metrics = evaluate(cfg.net, params, ds, weights);
  const size_t n_params = params.total_count();

  std::printf("%-24s %12s %8s %10s %10s\n", "network", "parameters", "iou", "loss", "accuracy");
  std::printf("%-24s %12zu %8.4f %10.4f %10.2f\n", fs::path(o.checkpoint).filename().c_str(),
              n_params, metrics.miou, metrics.loss, metrics.accuracy);

  if (!o.out.empty()) {
    ensure_dir(o.out);
    std::ofstream csv(o.out + "/eval.csv");
    csv << "parameters,miou,loss,accuracy\n";
    csv << n_params << "," << format_double(metrics.miou) << "," << format_double(metrics.loss)
        << "," << format_double(metrics.accuracy) << "\n";
    csv.close();
    Manifest m;
    m.emplace_back("command", "eval");
    m.emplace_back("checkpoint", abspath(o.checkpoint));
    m.emplace_back("data", abspath(o.data));
    m.emplace_back("output.eval", "eval.csv");
    write_manifest(o.out + "/manifest.txt", m);
  }
}

// ------------------------------------------------------------ stability ---

struct StabilityOpts {
  double re0 = -10.0, re1 = 0.0, im0 = -10.0, im1 = 10.0;
  int n = 41;
  double h = 1.0;
  std::string alpha = "auto";
  std::string out = "stability";
};

void run_stability(const StabilityOpts& o) {
  if (o.re1 > 0.0)
    throw ValueError("stability: re1 > 0 is outside the non-positive real part hypothesis");
  require(o.n > 0, "stability: grid size must be positive");
  require(o.h > 0.0, "stability: h must be positive");

  double alpha = 0.0;
  bool unbounded = false;
  if (o.alpha == "auto") {
    std::vector<std::complex<double>> lambdas;
    lambdas.reserve(static_cast<size_t>(o.n) * o.n);
    for (int i = 0; i < o.n; ++i) {
      const double re = o.n == 1 ? o.re0 : o.re0 + (o.re1 - o.re0) * i / (o.n - 1);
      for (int j = 0; j < o.n; ++j) {
        const double im = o.n == 1 ? o.im0 : o.im0 + (o.im1 - o.im0) * j / (o.n - 1);
        lambdas.emplace_back(re, im);
      }
    }
    const AlphaBound bound = alpha_bound(lambdas, o.h);
    unbounded = bound.unbounded;
    alpha = unbounded ? kDefaultAlpha : bound.value;
  } else {
    try {
      size_t pos = 0;
      alpha = std::stod(o.alpha, &pos);
      if (pos != o.alpha.size()) throw std::invalid_argument(o.alpha);
    } catch (const std::exception&) {
      throw ValueError("stability: --alpha must be a number or 'auto'");
    }
    if (alpha < 0.0) throw ValueError("stability: alpha must be non-negative");
  }

  const StabilityReport rep = stability_grid(o.re0, o.re1, o.im0, o.im1, o.n, o.h, alpha);
  ensure_dir(o.out);
  std::ofstream csv(o.out + "/stability.csv");
  if (!csv) throw FormatError("cannot open stability.csv for writing");
  csv << "lambda_re,lambda_im,h,alpha,factor_fe,factor_imex\n";
  double max_fe = 0.0, max_imex = 0.0;
  for (const auto& p : rep.grid) {
    csv << format_double(p.re) << "," << format_double(p.im) << "," << format_double(o.h) << ","
        << format_double(alpha) << "," << format_double(p.factor_fe) << ","
        << format_double(p.factor_imex) << "\n";
    max_fe = std::max(max_fe, p.factor_fe);
    max_imex = std::max(max_imex, p.factor_imex);
  }
  csv.close();

  Manifest m;
  m.emplace_back("command", "stability");
  m.emplace_back("re0", format_double(o.re0));
  m.emplace_back("re1", format_double(o.re1));
  m.emplace_back("im0", format_double(o.im0));
  m.emplace_back("im1", format_double(o.im1));
  m.emplace_back("n", std::to_string(o.n));
  m.emplace_back("h", format_double(o.h));
  m.emplace_back("alpha_arg", o.alpha);
  m.emplace_back("alpha", unbounded ? "unbounded" : format_double(alpha));
  m.emplace_back("output.report", "stability.csv");
  write_manifest(o.out + "/manifest.txt", m);

  if (unbounded)
    std::cout << "alpha = unbounded (no finite shift stabilizes a purely imaginary rate; "
                 "report computed at alpha = "
              << alpha << ")\n";
  else
    std::cout << "alpha = " << alpha << "\n";
  std::cout << "max factor_fe = " << max_fe << ", max factor_imex = " << max_imex << "\n";
}

// ---------------------------------------------------------------- rerun ---

struct RerunOpts {
  std::string manifest;
  std::string out;
};

void run_rerun(const RerunOpts& o) {
  const Manifest m = read_manifest(o.manifest);
  const std::string cmd = manifest_get(m, "command");
  if (cmd == "generate") {
    GenerateOpts g;
    g.n = std::stoi(manifest_get(m, "n"));
    g.val = std::stoi(manifest_get(m, "val"));
    g.size = std::stoi(manifest_get(m, "size"));
    g.seed = std::stoull(manifest_get(m, "seed"));
    g.out = o.out;
    run_generate(g);
  } else if (cmd == "propagate") {
    PropagateOpts p;
    p.mode = manifest_get(m, "mode");
    p.layers = std::stoi(manifest_get(m, "layers"));
    p.h = std::stod(manifest_get(m, "h"));
    p.size = std::stoi(manifest_get(m, "size"));
    p.eps = std::stod(manifest_get(m, "eps"));
    p.out = o.out;
    run_propagate(p);
  } else if (cmd == "train") {
    TrainOpts t;
    t.config = manifest_get(m, "config");
    t.data = manifest_get(m, "data");
    t.epochs = std::stoi(manifest_get(m, "epochs"));
    t.lr = std::stod(manifest_get(m, "lr"));
    t.batch = std::stoi(manifest_get(m, "batch"));
    t.seed = static_cast<int64_t>(std::stoull(manifest_get(m, "seed")));
    t.out = o.out;
    run_train(t);
  } else if (cmd == "stability") {
    StabilityOpts s;
    s.re0 = std::stod(manifest_get(m, "re0"));
    s.re1 = std::stod(manifest_get(m, "re1"));
    s.im0 = std::stod(manifest_get(m, "im0"));
    s.im1 = std::stod(manifest_get(m, "im1"));
    s.n = std::stoi(manifest_get(m, "n"));
    s.h = std::stod(manifest_get(m, "h"));
    s.alpha = manifest_get(m, "alpha_arg");
    s.out = o.out;
    run_stability(s);
  } else {
    throw FormatError("rerun: unsupported command '" + cmd + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imexlab - semi-implicit network laboratory"};
  app.require_subcommand(1);
  // --h is a step-size flag below, so help is long-form only
  app.set_help_flag("--help", "print help");

  GenerateOpts gen;
  auto* cgen = app.add_subcommand("generate", "Generate a Q-tips dataset (train + val)");
  cgen->set_help_flag("--help", "print help");
  cgen->add_option("--n", gen.n, "training samples");
  cgen->add_option("--val", gen.val, "validation samples");
  cgen->add_option("--size", gen.size, "image size");
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_option("--out", gen.out, "output directory");
  cgen->callback([&] { run_generate(gen); });

  PropagateOpts prop;
  auto* cprop = app.add_subcommand("propagate", "Field-of-view demo on a delta input");
  cprop->set_help_flag("--help", "print help");
  cprop->add_option("--mode", prop.mode, "step mode: explicit, imex, or dr");
  cprop->add_option("--layers", prop.layers, "layer count");
  cprop->add_option("--h", prop.h, "step size");
  cprop->add_option("--size", prop.size, "image size (power of two)");
  cprop->add_option("--eps", prop.eps, "coverage threshold");
  cprop->add_option("--out", prop.out, "output directory");
  cprop->callback([&] { run_propagate(prop); });

  TrainOpts tr;
  auto* ctr = app.add_subcommand("train", "Train a segmentation network");
  ctr->set_help_flag("--help", "print help");
  ctr->add_option("--config", tr.config, "network config file")->required();
  ctr->add_option("--data", tr.data, "directory holding train.qtds and val.qtds")->required();
  ctr->add_option("--epochs", tr.epochs, "training epochs");
  ctr->add_option("--lr", tr.lr, "learning rate");
  ctr->add_option("--batch", tr.batch, "batch size");
  ctr->add_option("--seed", tr.seed, "seed override (config seed if omitted)");
  ctr->add_option("--out", tr.out, "output directory");
  ctr->callback([&] { run_train(tr); });

  EvalOpts ev;
  auto* cev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  cev->set_help_flag("--help", "print help");
  cev->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  cev->add_option("--data", ev.data, "dataset (.qtds)")->required();
  cev->add_option("--out", ev.out, "optional output directory for eval.csv");
  cev->callback([&] { run_eval(ev); });

  StabilityOpts st;
  auto* cst = app.add_subcommand("stability", "Magnification-factor grid report");
  cst->set_help_flag("--help", "print help");
  cst->add_option("--re0", st.re0, "real-part range start");
  cst->add_option("--re1", st.re1, "real-part range end (<= 0)");
  cst->add_option("--im0", st.im0, "imaginary-part range start");
  cst->add_option("--im1", st.im1, "imaginary-part range end");
  cst->add_option("--n", st.n, "grid points per axis");
  cst->add_option("--h", st.h, "step size");
  cst->add_option("--alpha", st.alpha, "shift value or 'auto'");
  cst->add_option("--out", st.out, "output directory");
  cst->callback([&] { run_stability(st); });

  RerunOpts rr;
  auto* crr = app.add_subcommand("rerun", "Re-execute a run from its manifest");
  crr->set_help_flag("--help", "print help");
  crr->add_option("--manifest", rr.manifest, "manifest file")->required();
  crr->add_option("--out", rr.out, "output directory")->required();
  crr->callback([&] { run_rerun(rr); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
