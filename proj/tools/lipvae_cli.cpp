// Command-line surface: train, certify, curves, attack, margin.  All model
// and math work goes through the C API; this file only parses flags, shuttles
// buffers, and writes CSV/JSON/PGM artifacts plus a run manifest.
#include "lipvae/lipvae.h"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

constexpr const char* kManifestName = "manifest.json";

[[noreturn]] void fail(const std::string& context) {
  std::cerr << "error: " << context;
  const char* detail = lipvae_last_error();
  if (detail != nullptr && detail[0] != '\0') std::cerr << ": " << detail;
  std::cerr << "\n";
  std::exit(2);
}

void check(lipvae_status st, const std::string& context) {
  if (st != LIPVAE_OK) fail(context);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct DatasetDeleter {
  void operator()(lipvae_dataset* p) const { lipvae_dataset_free(p); }
};
struct ModelDeleter {
  void operator()(lipvae_model* p) const { lipvae_model_free(p); }
};
struct AttackDeleter {
  void operator()(lipvae_attack_result* p) const {
    lipvae_attack_result_free(p);
  }
};
struct MarginDeleter {
  void operator()(lipvae_margin_estimate* p) const {
    lipvae_margin_estimate_free(p);
  }
};
using DatasetPtr = std::unique_ptr<lipvae_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<lipvae_model, ModelDeleter>;
using AttackPtr = std::unique_ptr<lipvae_attack_result, AttackDeleter>;
using MarginPtr = std::unique_ptr<lipvae_margin_estimate, MarginDeleter>;

// ---------------------------------------------------------------- outputs

class OutputSet {
 public:
  explicit OutputSet(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) {
      std::cerr << "error: cannot create output directory " << dir_ << ": "
                << ec.message() << "\n";
      std::exit(2);
    }
  }

  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  std::ofstream open(const std::string& name) {
    std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
    if (!out) {
      std::cerr << "error: cannot open " << path(name) << " for writing\n";
      std::exit(2);
    }
    names_.push_back(name);
    return out;
  }

  std::ofstream open_csv(const std::string& name, const std::string& schema,
                         const std::string& header) {
    std::ofstream out = open(name);
    out << "# schema: " << schema << "\n";
    out << "# manifest: " << kManifestName << "\n";
    out << header << "\n";
    return out;
  }

  void finish(std::ofstream& out, const std::string& name) {
    out.flush();
    if (!out) {
      std::cerr << "error: failed while writing " << path(name) << "\n";
      std::exit(2);
    }
  }

  // For files written by the library rather than through open().
  void record(const std::string& name) { names_.push_back(name); }

  const std::vector<std::string>& names() const { return names_; }

 private:
  std::string dir_;
  std::vector<std::string> names_;
};

void write_json_file(OutputSet& out, const std::string& name, json j) {
  j["manifest"] = kManifestName;
  std::ofstream f = out.open(name);
  f << j.dump(2) << "\n";
  out.finish(f, name);
}

void write_pgm(OutputSet& out, const std::string& name,
               const std::vector<double>& pixels, int64_t side) {
  std::ofstream f = out.open(name);
  f << "P2\n# manifest: " << kManifestName << "\n" << side << " " << side
    << "\n255\n";
  for (int64_t r = 0; r < side; ++r) {
    for (int64_t c = 0; c < side; ++c) {
      const double v = pixels[static_cast<size_t>(r * side + c)];
      const int g = static_cast<int>(
          std::lround(255.0 * std::min(1.0, std::max(0.0, v))));
      f << g << (c + 1 == side ? "" : " ");
    }
    f << "\n";
  }
  out.finish(f, name);
}

std::string utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, uint64_t seed)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["version"] = lipvae_version();
    j_["seed"] = seed;
    j_["started_utc"] = utc_now();
  }

  json& config() { return j_["config"]; }
  json& metrics() { return j_["metrics"]; }
  void add_input(const std::string& s) { j_["inputs"].push_back(s); }

  void write(OutputSet& out) {
    j_["outputs"] = out.names();
    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    j_["wall_clock_seconds"] = elapsed;
    std::ofstream f = out.open(kManifestName);
    f << j_.dump(2) << "\n";
    out.finish(f, kManifestName);
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

// ------------------------------------------------------------ data source

struct DataFlags {
  bool synthetic = false;
  bool desk_scale = false;
  int64_t synthetic_count = 512;
  int64_t input_side = 28;
  int components = 3;
  uint64_t data_seed = 7;
  std::string images_path;
  std::string labels_path;
  int64_t downsample = 1;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_flag("--synthetic", f.synthetic,
                "use the built-in synthetic bump corpus");
  cmd->add_flag("--desk-scale", f.desk_scale,
                "small synthetic profile: 8x8 inputs, width-64 networks");
  cmd->add_option("--synthetic-count", f.synthetic_count,
                  "synthetic sample count");
  cmd->add_option("--input-side", f.input_side,
                  "synthetic image side length");
  cmd->add_option("--components", f.components,
                  "synthetic mixture component count");
  cmd->add_option("--data-seed", f.data_seed, "synthetic data seed");
  cmd->add_option("--images", f.images_path, "IDX image file");
  cmd->add_option("--labels", f.labels_path, "IDX label file");
  cmd->add_option("--downsample", f.downsample,
                  "block-mean downsample factor");
}

DatasetPtr load_data(DataFlags& f, Manifest& man) {
  if (f.desk_scale) {
    f.synthetic = true;
    f.input_side = 8;
  }
  lipvae_dataset* raw = nullptr;
  if (f.synthetic) {
    const int64_t dim = f.input_side * f.input_side;
    check(lipvae_dataset_synthetic(f.synthetic_count, dim, f.data_seed,
                                   f.components, &raw),
          "generating synthetic data");
    man.add_input("synthetic(n=" + std::to_string(f.synthetic_count) +
                  ", d=" + std::to_string(dim) +
                  ", seed=" + std::to_string(f.data_seed) + ")");
  } else if (!f.images_path.empty()) {
    check(lipvae_dataset_load_idx(
              f.images_path.c_str(),
              f.labels_path.empty() ? nullptr : f.labels_path.c_str(), &raw),
          "loading " + f.images_path);
    man.add_input(f.images_path);
    if (!f.labels_path.empty()) man.add_input(f.labels_path);
  } else {
    std::cerr << "error: no data source; pass --synthetic, --desk-scale or "
                 "--images\n";
    std::exit(2);
  }
  DatasetPtr ds(raw);
  if (f.downsample > 1) {
    lipvae_dataset* small = nullptr;
    check(lipvae_dataset_downsample(ds.get(), f.downsample, &small),
          "downsampling");
    ds.reset(small);
  }
  return ds;
}

json data_config_json(const DataFlags& f) {
  json j;
  j["synthetic"] = f.synthetic;
  j["desk_scale"] = f.desk_scale;
  j["synthetic_count"] = f.synthetic_count;
  j["input_side"] = f.input_side;
  j["components"] = f.components;
  j["data_seed"] = f.data_seed;
  j["images"] = f.images_path;
  j["labels"] = f.labels_path;
  j["downsample"] = f.downsample;
  return j;
}

std::vector<double> dataset_row(const lipvae_dataset* ds, int64_t i) {
  std::vector<double> x(static_cast<size_t>(lipvae_dataset_dim(ds)));
  check(lipvae_dataset_row(ds, i, x.data()), "reading dataset row");
  return x;
}

ModelPtr load_model(const std::string& path) {
  lipvae_model* raw = nullptr;
  check(lipvae_model_load(path.c_str(), &raw), "loading checkpoint " + path);
  return ModelPtr(raw);
}

void check_input_range(const lipvae_dataset* ds, int64_t offset,
                       int64_t count) {
  if (offset < 0 || count < 1 ||
      offset + count > lipvae_dataset_count(ds)) {
    std::cerr << "error: input range [" << offset << ", " << offset + count
              << ") exceeds the dataset (" << lipvae_dataset_count(ds)
              << " rows)\n";
    std::exit(2);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-constrained VAE toolkit"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a model, write checkpoint");
  DataFlags train_data;
  add_data_flags(train, train_data);
  std::string train_out = "out/train";
  bool standard = false;
  double lip_const = 5.0;
  double fixed_sigma_norm = -1.0;
  double beta = 1.0;
  int64_t latent_dim = 10;
  std::vector<int64_t> hidden;
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 1e-3;
  uint64_t train_seed = 1;
  std::string resume_path;
  train->add_option("--out-dir", train_out, "output directory");
  train->add_flag("--standard", standard,
                  "unconstrained ReLU networks (no certificate)");
  train->add_option("--lip-const", lip_const,
                    "Lipschitz bound for every network");
  train->add_option("--fixed-sigma-norm", fixed_sigma_norm,
                    "fix the posterior scale to this l2 norm");
  train->add_option("--beta", beta, "KL weight");
  train->add_option("--latent-dim", latent_dim, "latent dimension");
  train->add_option("--hidden", hidden, "hidden widths (default 512 512 512)");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch-size", batch_size, "minibatch size");
  train->add_option("--learning-rate", learning_rate, "Adam learning rate");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  // ---- certify ----
  auto* certify = app.add_subcommand(
      "certify", "certified robustness margins (checkpoint or calculator)");
  DataFlags cert_data;
  add_data_flags(certify, cert_data);
  std::string cert_out = "out/certify";
  std::string cert_ckpt;
  double cert_a = -1, cert_b = -1, cert_c = 0, cert_sigma_norm = -1;
  int64_t cert_dz = 10;
  double cert_r = -1;
  bool cert_global = false;
  int64_t cert_count = 25, cert_offset = 0;
  certify->add_option("--out-dir", cert_out, "output directory");
  certify->add_option("--checkpoint", cert_ckpt, "trained model checkpoint");
  certify->add_option("--a", cert_a, "decoder Lipschitz constant (calculator)");
  certify->add_option("--b", cert_b, "encoder-mean constant (calculator)");
  certify->add_option("--c", cert_c, "encoder-scale constant (calculator)");
  certify->add_option("--sigma-norm", cert_sigma_norm,
                      "posterior scale norm (calculator)");
  certify->add_option("--latent-dim", cert_dz, "latent dimension (calculator)");
  certify->add_option("--r", cert_r, "reconstruction distance threshold");
  certify->add_flag("--global", cert_global,
                    "input-independent margin (fixed-sigma models)");
  certify->add_option("--count", cert_count, "number of test inputs");
  certify->add_option("--offset", cert_offset, "first test input index");

  // ---- curves ----
  auto* curves = app.add_subcommand(
      "curves", "probability-bound curves over the perturbation norm");
  std::string curves_out = "out/curves";
  double cur_a = 5, cur_b = 5, cur_c = 5, cur_sigma = 0.1;
  int64_t cur_dz = 5;
  double cur_r = 8;
  double cur_delta_max = -1;
  int cur_points = 400;
  curves->add_option("--out-dir", curves_out, "output directory");
  curves->add_option("--a", cur_a, "decoder Lipschitz constant");
  curves->add_option("--b", cur_b, "encoder-mean constant");
  curves->add_option("--c", cur_c, "encoder-scale constant");
  curves->add_option("--sigma-norm", cur_sigma, "posterior scale norm");
  curves->add_option("--latent-dim", cur_dz, "latent dimension");
  curves->add_option("--r", cur_r, "reconstruction distance threshold");
  curves->add_option("--delta-max", cur_delta_max,
                     "largest perturbation norm (default r/(a*b))");
  curves->add_option("--points", cur_points, "rows in the emitted grid");

  // ---- attack ----
  auto* attack = app.add_subcommand("attack", "adversarial attacks");
  DataFlags att_data;
  add_data_flags(attack, att_data);
  std::string att_out = "out/attack";
  std::string att_ckpt;
  std::string att_mode = "max-damage";
  double att_budget = 1.0;
  double att_r = 16.0 / 7.0;
  int64_t att_count = 1, att_offset = 0;
  int64_t att_target_index = 0;
  int att_steps = 200, att_restarts = 5, att_sps = 64, att_final = 1000;
  uint64_t att_seed = 0;
  bool att_clip = false;
  attack->add_option("--out-dir", att_out, "output directory");
  attack->add_option("--checkpoint", att_ckpt, "trained model checkpoint")
      ->required();
  attack->add_option("--mode", att_mode, "max-damage or latent");
  attack->add_option("--budget", att_budget, "l2 perturbation budget");
  attack->add_option("--r", att_r,
                     "distance threshold for probability reporting");
  attack->add_option("--count", att_count, "number of attacked inputs");
  attack->add_option("--offset", att_offset, "first attacked input index");
  attack->add_option("--target-index", att_target_index,
                     "target input (latent mode)");
  attack->add_option("--steps", att_steps, "gradient steps per restart");
  attack->add_option("--restarts", att_restarts, "random restarts");
  attack->add_option("--samples", att_sps, "draws per objective evaluation");
  attack->add_option("--final-samples", att_final,
                     "draws for the final estimate");
  attack->add_option("--seed", att_seed, "attack seed");
  attack->add_flag("--clip", att_clip, "keep perturbed inputs inside [0,1]");

  // ---- margin ----
  auto* margin =
      app.add_subcommand("margin", "empirical robustness margin ladder");
  DataFlags mar_data;
  add_data_flags(margin, mar_data);
  std::string mar_out = "out/margin";
  std::string mar_ckpt;
  double mar_r = 16.0 / 7.0;
  double mar_max_r = 5.0, mar_alpha = 0.25;
  int mar_samples = 1000, mar_restarts = 5, mar_steps = 200, mar_sps = 64;
  int64_t mar_count = 25, mar_offset = 0;
  uint64_t mar_seed = 0;
  margin->add_option("--out-dir", mar_out, "output directory");
  margin->add_option("--checkpoint", mar_ckpt, "trained model checkpoint")
      ->required();
  margin->add_option("--r", mar_r, "reconstruction distance threshold");
  margin->add_option("--max-r", mar_max_r, "ladder start radius");
  margin->add_option("--alpha", mar_alpha, "ladder decrement");
  margin->add_option("--samples", mar_samples,
                     "draws per probability estimate");
  margin->add_option("--restarts", mar_restarts, "attacks per rung");
  margin->add_option("--steps", mar_steps, "gradient steps per attack");
  margin->add_option("--samples-per-step", mar_sps,
                     "draws per attack objective evaluation");
  margin->add_option("--count", mar_count, "number of test inputs");
  margin->add_option("--offset", mar_offset, "first test input index");
  margin->add_option("--seed", mar_seed, "base seed (per input: seed + index)");

  CLI11_PARSE(app, argc, argv);

  // ------------------------------------------------------------- train
  if (train->parsed()) {
    Manifest man("train", train_seed);
    OutputSet out(train_out);
    DatasetPtr ds = load_data(train_data, man);

    ModelPtr model;
    if (!resume_path.empty()) {
      model = load_model(resume_path);
      man.add_input(resume_path);
    } else {
      if (hidden.empty()) {
        hidden = train_data.desk_scale ? std::vector<int64_t>{64, 64, 64}
                                       : std::vector<int64_t>{512, 512, 512};
      }
      lipvae_model_config mc;
      lipvae_model_config_default(&mc);
      mc.input_dim = lipvae_dataset_dim(ds.get());
      mc.latent_dim = latent_dim;
      mc.hidden = hidden.data();
      mc.hidden_count = hidden.size();
      mc.lipschitz = standard ? 0 : 1;
      mc.decoder_bound = lip_const;
      mc.encoder_mean_bound = lip_const;
      mc.encoder_std_bound = lip_const;
      mc.fixed_sigma = fixed_sigma_norm >= 0 ? 1 : 0;
      mc.fixed_sigma_norm = fixed_sigma_norm >= 0 ? fixed_sigma_norm : 0.0;
      mc.beta = beta;
      lipvae_train_config tc;
      lipvae_train_config_default(&tc);
      tc.epochs = epochs;
      tc.batch_size = batch_size;
      tc.learning_rate = learning_rate;
      tc.seed = train_seed;
      lipvae_model* raw = nullptr;
      check(lipvae_model_create(&mc, &tc, &raw), "building the model");
      model.reset(raw);
    }

    check(lipvae_model_train(model.get(), ds.get(), epochs), "training");
    check(lipvae_model_save(model.get(), out.path("checkpoint.lvck").c_str()),
          "saving the checkpoint");
    out.record("checkpoint.lvck");

    std::ofstream hist = out.open_csv("history.csv", "lipvae.history.v1",
                                      "epoch,elbo,recon_ll,kl");
    const size_t n_hist = lipvae_model_history_count(model.get());
    for (size_t i = 0; i < n_hist; ++i) {
      double e = 0, rl = 0, kl = 0;
      check(lipvae_model_history_row(model.get(), i, &e, &rl, &kl),
            "reading history");
      hist << i << "," << fmt(e) << "," << fmt(rl) << "," << fmt(kl) << "\n";
    }
    out.finish(hist, "history.csv");
    man.config()["data"] = data_config_json(train_data);
    man.config()["standard"] = standard;
    man.config()["lip_const"] = lip_const;
    man.config()["fixed_sigma_norm"] = fixed_sigma_norm;
    man.config()["beta"] = beta;
    man.config()["latent_dim"] = latent_dim;
    man.config()["hidden"] = hidden;
    man.config()["epochs"] = epochs;
    man.config()["batch_size"] = batch_size;
    man.config()["learning_rate"] = learning_rate;
    man.config()["resume"] = resume_path;
    man.metrics()["epochs_done"] = lipvae_model_epochs_done(model.get());
    if (!standard) {
      double emp = 0;
      check(lipvae_model_empirical_lipschitz(model.get(), 0, 1000, 123, &emp),
            "estimating the decoder constant");
      man.metrics()["empirical_decoder_lipschitz"] = emp;
    }
    man.write(out);
    std::cout << "trained " << lipvae_model_epochs_done(model.get())
              << " epochs -> " << out.path("checkpoint.lvck") << "\n";
    return 0;
  }

  // ----------------------------------------------------------- certify
  if (certify->parsed()) {
    const bool calculator = cert_ckpt.empty();
    Manifest man("certify", 0);
    OutputSet out(cert_out);
    json rows = json::array();
    std::ofstream csv =
        out.open_csv("certify.csv", "lipvae.certify.v1",
                     "index,sigma_norm,m1,m2,margin,m2_at_zero");

    lipvae_cert_constants cc{};
    if (calculator) {
      if (cert_a <= 0 || cert_b <= 0 || cert_sigma_norm < 0 || cert_r <= 0) {
        std::cerr << "error: calculator mode needs --a, --b, --sigma-norm "
                     "and --r\n";
        return 2;
      }
      cc.decoder_lipschitz = cert_a;
      cc.encoder_mean_lipschitz = cert_b;
      cc.encoder_std_lipschitz = cert_c;
      cc.sigma_norm = cert_sigma_norm;
      cc.latent_dim = cert_dz;
      cc.r = cert_r;
      double m1 = 0, m2 = 0, mg = 0;
      int at_zero = 0;
      check(cert_global
                ? lipvae_global_margin(&cc, &m1, &m2, &mg, &at_zero)
                : lipvae_margin_bound(&cc, &m1, &m2, &mg, &at_zero),
            "evaluating the margin bound");
      csv << -1 << "," << fmt(cc.sigma_norm) << "," << fmt(m1) << ","
          << fmt(m2) << "," << fmt(mg) << "," << at_zero << "\n";
      rows.push_back({{"index", -1},
                      {"sigma_norm", cc.sigma_norm},
                      {"m1", m1},
                      {"m2", m2},
                      {"margin", mg},
                      {"m2_at_zero", at_zero != 0}});
    } else {
      if (cert_r <= 0) {
        std::cerr << "error: --r is required with a checkpoint\n";
        return 2;
      }
      ModelPtr model = load_model(cert_ckpt);
      man.add_input(cert_ckpt);
      double a = 0, b = 0, c = 0;
      const lipvae_status st =
          lipvae_model_constants(model.get(), &a, &b, &c);
      if (st == LIPVAE_ERR_NOT_CERTIFIABLE) {
        std::cerr << "error: this checkpoint has no certificate: "
                  << lipvae_last_error()
                  << "\nonly Lipschitz-constrained models admit certified "
                     "margins; retrain with --lip-const\n";
        return 2;
      }
      check(st, "reading certified constants");
      cc.decoder_lipschitz = a;
      cc.encoder_mean_lipschitz = b;
      cc.encoder_std_lipschitz = c;
      cc.latent_dim = lipvae_model_latent_dim(model.get());
      cc.r = cert_r;

      if (cert_global) {
        if (lipvae_model_is_fixed_sigma(model.get()) == 0) {
          std::cerr << "error: --global needs a fixed-sigma checkpoint; this "
                       "model has an input-dependent scale head\n";
          return 2;
        }
        const std::vector<double> zeros(
            static_cast<size_t>(lipvae_model_input_dim(model.get())), 0.0);
        double sn = 0;
        check(lipvae_model_sigma_norm(model.get(), zeros.data(), &sn),
              "reading the fixed scale norm");
        cc.sigma_norm = sn;
        double m1 = 0, m2 = 0, mg = 0;
        int at_zero = 0;
        check(lipvae_global_margin(&cc, &m1, &m2, &mg, &at_zero),
              "evaluating the global margin");
        csv << -1 << "," << fmt(sn) << "," << fmt(m1) << "," << fmt(m2) << ","
            << fmt(mg) << "," << at_zero << "\n";
        rows.push_back({{"index", -1},
                        {"sigma_norm", sn},
                        {"m1", m1},
                        {"m2", m2},
                        {"margin", mg},
                        {"m2_at_zero", at_zero != 0}});
      } else {
        DatasetPtr ds = load_data(cert_data, man);
        if (lipvae_dataset_dim(ds.get()) !=
            lipvae_model_input_dim(model.get())) {
          std::cerr << "error: dataset dimension does not match the model\n";
          return 2;
        }
        check_input_range(ds.get(), cert_offset, cert_count);
        for (int64_t i = cert_offset; i < cert_offset + cert_count; ++i) {
          const std::vector<double> x = dataset_row(ds.get(), i);
          double sn = 0;
          check(lipvae_model_sigma_norm(model.get(), x.data(), &sn),
                "encoding input " + std::to_string(i));
          cc.sigma_norm = sn;
          double m1 = 0, m2 = 0, mg = 0;
          int at_zero = 0;
          check(lipvae_margin_bound(&cc, &m1, &m2, &mg, &at_zero),
                "evaluating the margin bound");
          csv << i << "," << fmt(sn) << "," << fmt(m1) << "," << fmt(m2)
              << "," << fmt(mg) << "," << at_zero << "\n";
          rows.push_back({{"index", i},
                          {"sigma_norm", sn},
                          {"m1", m1},
                          {"m2", m2},
                          {"margin", mg},
                          {"m2_at_zero", at_zero != 0}});
        }
      }
      man.metrics()["decoder_lipschitz"] = a;
      man.metrics()["encoder_mean_lipschitz"] = b;
      man.metrics()["encoder_std_lipschitz"] = c;
    }
    out.finish(csv, "certify.csv");
    json report;
    report["mode"] = calculator ? "calculator" : "checkpoint";
    report["global"] = cert_global;
    report["r"] = cc.r;
    report["constants"] = {{"a", cc.decoder_lipschitz},
                           {"b", cc.encoder_mean_lipschitz},
                           {"c", cc.encoder_std_lipschitz},
                           {"latent_dim", cc.latent_dim}};
    report["rows"] = rows;
    write_json_file(out, "certify.json", report);
    man.config()["data"] = data_config_json(cert_data);
    man.config()["r"] = cert_r;
    man.config()["global"] = cert_global;
    man.config()["count"] = cert_count;
    man.config()["offset"] = cert_offset;
    man.write(out);
    std::cout << "wrote " << rows.size() << " certificate row(s) -> "
              << out.path("certify.csv") << "\n";
    return 0;
  }

  // ------------------------------------------------------------ curves
  if (curves->parsed()) {
    Manifest man("curves", 0);
    OutputSet out(curves_out);
    if (cur_a <= 0 || cur_b <= 0 || cur_r <= 0) {
      std::cerr << "error: --a, --b and --r must be positive\n";
      return 2;
    }
    if (cur_delta_max <= 0) cur_delta_max = cur_r / (cur_a * cur_b);
    lipvae_cert_constants cc{};
    cc.decoder_lipschitz = cur_a;
    cc.encoder_mean_lipschitz = cur_b;
    cc.encoder_std_lipschitz = cur_c;
    cc.sigma_norm = cur_sigma;
    cc.latent_dim = cur_dz;
    cc.r = cur_r;

    std::ofstream csv = out.open_csv("curves.csv", "lipvae.curves.v1",
                                     "delta,p1,p2,bound,branch,min_is_p2");
    for (int i = 0; i <= cur_points; ++i) {
      const double delta = cur_delta_max * double(i) / double(cur_points);
      double p1 = 0, p2 = 0, lb = 0;
      int branch = 0, p2min = 0;
      check(lipvae_probability_bound(&cc, delta, &p1, &p2, &lb, &branch,
                                     &p2min),
            "evaluating the probability bound");
      csv << fmt(delta) << "," << fmt(p1) << "," << fmt(p2) << "," << fmt(lb)
          << "," << lipvae_tail_branch_name(branch) << "," << p2min << "\n";
    }
    out.finish(csv, "curves.csv");
    man.config()["a"] = cur_a;
    man.config()["b"] = cur_b;
    man.config()["c"] = cur_c;
    man.config()["sigma_norm"] = cur_sigma;
    man.config()["latent_dim"] = cur_dz;
    man.config()["r"] = cur_r;
    man.config()["delta_max"] = cur_delta_max;
    man.config()["points"] = cur_points;
    man.write(out);
    std::cout << "wrote " << cur_points + 1 << " rows -> "
              << out.path("curves.csv") << "\n";
    return 0;
  }

  // ------------------------------------------------------------ attack
  if (attack->parsed()) {
    if (att_mode != "max-damage" && att_mode != "latent") {
      std::cerr << "error: --mode must be max-damage or latent\n";
      return 2;
    }
    Manifest man("attack", att_seed);
    OutputSet out(att_out);
    ModelPtr model = load_model(att_ckpt);
    man.add_input(att_ckpt);
    DatasetPtr ds = load_data(att_data, man);
    if (lipvae_dataset_dim(ds.get()) != lipvae_model_input_dim(model.get())) {
      std::cerr << "error: dataset dimension does not match the model\n";
      return 2;
    }
    check_input_range(ds.get(), att_offset, att_count);
    const int64_t side = lipvae_dataset_side(ds.get());
    const int64_t dim = lipvae_dataset_dim(ds.get());

    lipvae_attack_config ac;
    lipvae_attack_config_default(&ac);
    ac.budget = att_budget;
    ac.steps = att_steps;
    ac.restarts = att_restarts;
    ac.samples_per_step = att_sps;
    ac.final_samples = att_final;
    ac.clip_inputs = att_clip ? 1 : 0;

    json inputs = json::array();
    std::ofstream csv = out.open_csv(
        "attack_summary.csv", "lipvae.attack.v1",
        "index,objective,baseline_objective,r_probability,delta_norm");
    double sum_obj = 0, sum_base = 0;
    for (int64_t i = att_offset; i < att_offset + att_count; ++i) {
      const std::vector<double> x = dataset_row(ds.get(), i);
      ac.seed = att_seed + static_cast<uint64_t>(i);
      lipvae_attack_result* raw = nullptr;
      if (att_mode == "max-damage") {
        check(lipvae_attack_max_damage(model.get(), x.data(), att_r, &ac,
                                       &raw),
              "attacking input " + std::to_string(i));
      } else {
        if (att_target_index < 0 ||
            att_target_index >= lipvae_dataset_count(ds.get())) {
          std::cerr << "error: --target-index out of range\n";
          return 2;
        }
        const std::vector<double> xt =
            dataset_row(ds.get(), att_target_index);
        check(lipvae_attack_latent(model.get(), x.data(), xt.data(), &ac,
                                   &raw),
              "attacking input " + std::to_string(i));
      }
      AttackPtr res(raw);

      std::vector<double> delta(lipvae_attack_result_delta_size(res.get()));
      check(lipvae_attack_result_delta(res.get(), delta.data()),
            "reading the perturbation");
      double delta_norm = 0;
      for (double v : delta) delta_norm += v * v;
      delta_norm = std::sqrt(delta_norm);

      const size_t steps = lipvae_attack_result_trace_size(res.get());
      std::vector<double> trace(steps), best_trace(steps);
      std::vector<double> restarts(
          lipvae_attack_result_restart_count(res.get()));
      if (steps > 0) {
        check(lipvae_attack_result_trace(res.get(), 0, trace.data()),
              "reading the trace");
        check(lipvae_attack_result_trace(res.get(), 1, best_trace.data()),
              "reading the trace");
      }
      if (!restarts.empty()) {
        check(lipvae_attack_result_trace(res.get(), 2, restarts.data()),
              "reading restart objectives");
      }

      std::vector<double> xp(x);
      for (size_t k = 0; k < xp.size(); ++k) xp[k] += delta[k];
      std::vector<double> recon_x(static_cast<size_t>(dim));
      std::vector<double> recon_xp(static_cast<size_t>(dim));
      check(lipvae_model_reconstruct(model.get(), x.data(), recon_x.data()),
            "reconstructing the input");
      check(lipvae_model_reconstruct(model.get(), xp.data(), recon_xp.data()),
            "reconstructing the perturbed input");

      const double obj = lipvae_attack_result_objective(res.get());
      const double base = lipvae_attack_result_baseline(res.get());
      const double rp = lipvae_attack_result_r_probability(res.get());
      sum_obj += obj;
      sum_base += base;
      csv << i << "," << fmt(obj) << "," << fmt(base) << "," << fmt(rp) << ","
          << fmt(delta_norm) << "\n";

      json ji;
      ji["index"] = i;
      ji["objective"] = obj;
      ji["baseline_objective"] = base;
      ji["r_probability"] = rp;
      ji["delta_norm"] = delta_norm;
      ji["max_delta_norm"] =
          lipvae_attack_result_max_delta_norm(res.get());
      ji["best_restart"] = lipvae_attack_result_best_restart(res.get());
      ji["delta"] = delta;
      ji["trace"] = trace;
      ji["best_trace"] = best_trace;
      ji["restart_objectives"] = restarts;
      ji["x"] = x;
      ji["x_perturbed"] = xp;
      ji["recon_original"] = recon_x;
      ji["recon_perturbed"] = recon_xp;
      if (att_mode == "latent") ji["target_index"] = att_target_index;
      inputs.push_back(std::move(ji));

      if (side > 0) {
        const std::string tag = "attack_" + std::to_string(i);
        write_pgm(out, tag + "_original.pgm", x, side);
        write_pgm(out, tag + "_perturbed.pgm", xp, side);
        write_pgm(out, tag + "_recon_original.pgm", recon_x, side);
        write_pgm(out, tag + "_recon_perturbed.pgm", recon_xp, side);
      }
    }
    out.finish(csv, "attack_summary.csv");

    json report;
    report["mode"] = att_mode;
    report["budget"] = att_budget;
    report["r"] = att_r;
    report["steps"] = att_steps;
    report["restarts"] = att_restarts;
    report["samples_per_step"] = att_sps;
    report["final_samples"] = att_final;
    report["clip"] = att_clip;
    report["inputs"] = inputs;
    report["mean_objective"] = sum_obj / double(att_count);
    report["mean_baseline_objective"] = sum_base / double(att_count);
    write_json_file(out, "attack.json", report);

    man.config()["data"] = data_config_json(att_data);
    man.config()["mode"] = att_mode;
    man.config()["budget"] = att_budget;
    man.config()["r"] = att_r;
    man.config()["count"] = att_count;
    man.config()["offset"] = att_offset;
    man.config()["target_index"] = att_target_index;
    man.config()["steps"] = att_steps;
    man.config()["restarts"] = att_restarts;
    man.config()["samples"] = att_sps;
    man.config()["final_samples"] = att_final;
    man.config()["clip"] = att_clip;
    man.write(out);
    std::cout << "attacked " << att_count << " input(s), mean objective "
              << fmt(sum_obj / double(att_count)) << " -> "
              << out.path("attack.json") << "\n";
    return 0;
  }

  // ------------------------------------------------------------ margin
  if (margin->parsed()) {
    Manifest man("margin", mar_seed);
    OutputSet out(mar_out);
    ModelPtr model = load_model(mar_ckpt);
    man.add_input(mar_ckpt);
    DatasetPtr ds = load_data(mar_data, man);
    if (lipvae_dataset_dim(ds.get()) != lipvae_model_input_dim(model.get())) {
      std::cerr << "error: dataset dimension does not match the model\n";
      return 2;
    }
    check_input_range(ds.get(), mar_offset, mar_count);

    lipvae_attack_config tmpl;
    lipvae_attack_config_default(&tmpl);
    tmpl.steps = mar_steps;
    tmpl.samples_per_step = mar_sps;

    std::ofstream csv = out.open_csv("margin.csv", "lipvae.margin.v1",
                                     "index,margin,found");
    std::ofstream probes_csv = out.open_csv(
        "probes.csv", "lipvae.margin-probes.v1",
        "index,radius,attack,probability");
    json per_input = json::array();
    std::vector<double> margins;
    for (int64_t i = mar_offset; i < mar_offset + mar_count; ++i) {
      const std::vector<double> x = dataset_row(ds.get(), i);
      lipvae_margin_estimate* raw = nullptr;
      check(lipvae_estimate_margin(model.get(), x.data(), mar_r, mar_max_r,
                                   mar_alpha, mar_samples, mar_restarts,
                                   mar_seed + static_cast<uint64_t>(i), &tmpl,
                                   &raw),
            "estimating the margin of input " + std::to_string(i));
      MarginPtr est(raw);
      const double m = lipvae_margin_value(est.get());
      const int found = lipvae_margin_found(est.get());
      margins.push_back(m);
      csv << i << "," << fmt(m) << "," << found << "\n";

      json probes = json::array();
      const size_t np = lipvae_margin_probe_count(est.get());
      for (size_t p = 0; p < np; ++p) {
        double radius = 0;
        check(lipvae_margin_probe_radius(est.get(), p, &radius),
              "reading probes");
        std::vector<double> probs(
            lipvae_margin_probe_prob_count(est.get(), p));
        if (!probs.empty()) {
          check(lipvae_margin_probe_probs(est.get(), p, probs.data()),
                "reading probes");
        }
        for (size_t t = 0; t < probs.size(); ++t) {
          probes_csv << i << "," << fmt(radius) << "," << t << ","
                     << fmt(probs[t]) << "\n";
        }
        probes.push_back({{"radius", radius}, {"probabilities", probs}});
      }
      per_input.push_back({{"index", i},
                           {"margin", m},
                           {"found", found != 0},
                           {"probes", probes}});
    }
    out.finish(csv, "margin.csv");
    out.finish(probes_csv, "probes.csv");

    double mean = 0;
    for (double m : margins) mean += m;
    mean /= double(margins.size());
    double var = 0;
    for (double m : margins) var += (m - mean) * (m - mean);
    var /= double(margins.size());

    json report;
    report["r"] = mar_r;
    report["max_radius"] = mar_max_r;
    report["alpha"] = mar_alpha;
    report["samples"] = mar_samples;
    report["attacks_per_rung"] = mar_restarts;
    report["inputs"] = per_input;
    report["mean_margin"] = mean;
    report["std_margin"] = std::sqrt(var);
    write_json_file(out, "margin.json", report);

    man.config()["data"] = data_config_json(mar_data);
    man.config()["r"] = mar_r;
    man.config()["max_r"] = mar_max_r;
    man.config()["alpha"] = mar_alpha;
    man.config()["samples"] = mar_samples;
    man.config()["restarts"] = mar_restarts;
    man.config()["steps"] = mar_steps;
    man.config()["samples_per_step"] = mar_sps;
    man.config()["count"] = mar_count;
    man.config()["offset"] = mar_offset;
    man.write(out);
    std::cout << "mean margin " << fmt(mean) << " (std " << fmt(std::sqrt(var))
              << ") over " << mar_count << " input(s) -> "
              << out.path("margin.csv") << "\n";
    return 0;
  }

  return 0;
}
