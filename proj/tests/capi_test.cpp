// The shared-library C interface: status mapping, error messages, handle
// lifecycles, and bitwise parity with the underlying core for datasets,
// models, the robustness calculator, attacks, and the margin ladder.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lipvae/lipvae.h"

#include "../src/attack.hpp"
#include "../src/certify.hpp"
#include "../src/dataset.hpp"
#include "../src/trainer.hpp"
#include "../src/vae.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("lipvae_capi_" + name)) {}
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

// Small Lipschitz model used throughout; mirrors small_core_model().
lipvae_model* make_small_model(std::uint64_t seed) {
  lipvae_model_config mc;
  lipvae_model_config_default(&mc);
  static const int64_t hidden[2] = {16, 16};
  mc.input_dim = 16;
  mc.latent_dim = 4;
  mc.hidden = hidden;
  mc.hidden_count = 2;
  mc.lipschitz = 1;
  mc.decoder_bound = 5.0;
  mc.encoder_mean_bound = 5.0;
  mc.fixed_sigma = 1;
  mc.fixed_sigma_norm = 0.1;
  lipvae_train_config tc;
  lipvae_train_config_default(&tc);
  tc.batch_size = 32;
  tc.seed = seed;
  lipvae_model* m = nullptr;
  REQUIRE(lipvae_model_create(&mc, &tc, &m) == LIPVAE_OK);
  REQUIRE(m != nullptr);
  return m;
}

lipvae::TrainedVae small_core_model(std::uint64_t seed) {
  lipvae::VaeConfig mc;
  mc.input_dim = 16;
  mc.latent_dim = 4;
  mc.hidden = {16, 16};
  mc.lipschitz = true;
  mc.decoder_bound = 5.0;
  mc.encoder_mean_bound = 5.0;
  mc.fixed_sigma = true;
  mc.sigma = lipvae::Vec::Constant(4, 0.1 / 2.0);
  lipvae::TrainConfig tc;
  tc.batch_size = 32;
  tc.seed = seed;
  return lipvae::make_untrained(mc, tc);
}

}  // namespace

TEST_CASE("version and error channel") {
  const char* v = lipvae_version();
  REQUIRE(v != nullptr);
  CHECK(std::strlen(v) > 0);
  CHECK(std::string(v).find('.') != std::string::npos);
  REQUIRE(lipvae_last_error() != nullptr);
}

TEST_CASE("dataset lifecycle and parity with the core") {
  lipvae_dataset* ds = nullptr;
  REQUIRE(lipvae_dataset_synthetic(64, 16, 7, 3, &ds) == LIPVAE_OK);
  REQUIRE(ds != nullptr);
  CHECK(lipvae_dataset_count(ds) == 64);
  CHECK(lipvae_dataset_dim(ds) == 16);
  CHECK(lipvae_dataset_side(ds) == 4);

  lipvae::Dataset core = lipvae::synthetic_blobs(64, 16, 7, 3);
  std::vector<double> row(16);
  for (int64_t i : {int64_t(0), int64_t(13), int64_t(63)}) {
    REQUIRE(lipvae_dataset_row(ds, i, row.data()) == LIPVAE_OK);
    for (int j = 0; j < 16; ++j) CHECK(row[j] == core.images(i, j));
  }

  CHECK(lipvae_dataset_row(ds, 64, row.data()) != LIPVAE_OK);
  CHECK(lipvae_dataset_row(ds, -1, row.data()) != LIPVAE_OK);
  CHECK(lipvae_dataset_row(ds, 0, nullptr) != LIPVAE_OK);

  lipvae_dataset* small = nullptr;
  REQUIRE(lipvae_dataset_downsample(ds, 2, &small) == LIPVAE_OK);
  CHECK(lipvae_dataset_dim(small) == 4);
  CHECK(lipvae_dataset_side(small) == 2);
  CHECK(lipvae_dataset_downsample(ds, 3, &small) ==
        LIPVAE_ERR_INVALID_ARGUMENT);
  lipvae_dataset_free(small);
  lipvae_dataset_free(ds);

  lipvae_dataset* missing = nullptr;
  lipvae_status st =
      lipvae_dataset_load_idx("/nonexistent/images-idx3", nullptr, &missing);
  CHECK(st == LIPVAE_ERR_IO);
  CHECK(std::string(lipvae_last_error()).find("/nonexistent/images-idx3") !=
        std::string::npos);

  CHECK(lipvae_dataset_synthetic(0, 16, 7, 3, &ds) ==
        LIPVAE_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(lipvae_last_error()) > 0);
}

TEST_CASE("model training matches the core bitwise") {
  lipvae_dataset* ds = nullptr;
  REQUIRE(lipvae_dataset_synthetic(64, 16, 7, 3, &ds) == LIPVAE_OK);
  lipvae_model* m = make_small_model(11);

  CHECK(lipvae_model_input_dim(m) == 16);
  CHECK(lipvae_model_latent_dim(m) == 4);
  CHECK(lipvae_model_is_lipschitz(m) == 1);
  CHECK(lipvae_model_is_fixed_sigma(m) == 1);
  CHECK(lipvae_model_epochs_done(m) == 0);

  REQUIRE(lipvae_model_train(m, ds, 2) == LIPVAE_OK);
  CHECK(lipvae_model_epochs_done(m) == 2);
  REQUIRE(lipvae_model_history_count(m) == 2);

  lipvae::TrainedVae core = small_core_model(11);
  lipvae::Dataset core_ds = lipvae::synthetic_blobs(64, 16, 7, 3);
  lipvae::train(core, core_ds, 2);

  double elbo = 0, recon = 0, kl = 0;
  REQUIRE(lipvae_model_history_row(m, 1, &elbo, &recon, &kl) == LIPVAE_OK);
  CHECK(elbo == core.history[1].elbo);
  CHECK(recon == core.history[1].recon_ll);
  CHECK(kl == core.history[1].kl);
  CHECK(lipvae_model_history_row(m, 2, &elbo, &recon, &kl) != LIPVAE_OK);

  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[i] = core_ds.images(0, i);
  std::vector<double> mu(4), sigma(4), lam(16), lam2(16);
  REQUIRE(lipvae_model_encode(m, x.data(), mu.data(), sigma.data()) ==
          LIPVAE_OK);
  lipvae::EncoderOutput eo = core.model.encode(core_ds.images.row(0).transpose());
  for (int i = 0; i < 4; ++i) {
    CHECK(mu[i] == eo.mu[i]);
    CHECK(sigma[i] == eo.sigma[i]);
  }

  REQUIRE(lipvae_model_decode(m, mu.data(), lam.data()) == LIPVAE_OK);
  lipvae::Vec core_lam = core.model.decode(eo.mu);
  for (int i = 0; i < 16; ++i) CHECK(lam[i] == core_lam[i]);

  REQUIRE(lipvae_model_reconstruct(m, x.data(), lam2.data()) == LIPVAE_OK);
  for (int i = 0; i < 16; ++i) CHECK(lam2[i] == core_lam[i]);

  double a = 0, b = 0, c = 0;
  REQUIRE(lipvae_model_constants(m, &a, &b, &c) == LIPVAE_OK);
  CHECK(a == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(b == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(c == 0.0);

  double sn = 0;
  REQUIRE(lipvae_model_sigma_norm(m, x.data(), &sn) == LIPVAE_OK);
  CHECK(sn == doctest::Approx(0.1).epsilon(1e-12));

  double emp = 0;
  REQUIRE(lipvae_model_empirical_lipschitz(m, 0, 200, 3, &emp) == LIPVAE_OK);
  CHECK(emp > 0.0);
  CHECK(emp <= 5.0 * (1.0 + 1e-3));
  CHECK(lipvae_model_empirical_lipschitz(m, 2, 200, 3, &emp) != LIPVAE_OK);

  CHECK(lipvae_model_encode(m, nullptr, mu.data(), sigma.data()) ==
        LIPVAE_ERR_INVALID_ARGUMENT);

  lipvae_model_free(m);
  lipvae_dataset_free(ds);
}

TEST_CASE("model save and load round trip through the C interface") {
  lipvae_dataset* ds = nullptr;
  REQUIRE(lipvae_dataset_synthetic(64, 16, 7, 3, &ds) == LIPVAE_OK);
  lipvae_model* m = make_small_model(13);
  REQUIRE(lipvae_model_train(m, ds, 1) == LIPVAE_OK);

  TempFile f("roundtrip.lvck");
  REQUIRE(lipvae_model_save(m, f.path.string().c_str()) == LIPVAE_OK);
  lipvae_model* loaded = nullptr;
  REQUIRE(lipvae_model_load(f.path.string().c_str(), &loaded) == LIPVAE_OK);
  CHECK(lipvae_model_epochs_done(loaded) == 1);

  std::vector<double> x(16, 0.25), r1(16), r2(16);
  REQUIRE(lipvae_model_reconstruct(m, x.data(), r1.data()) == LIPVAE_OK);
  REQUIRE(lipvae_model_reconstruct(loaded, x.data(), r2.data()) == LIPVAE_OK);
  for (int i = 0; i < 16; ++i) CHECK(r1[i] == r2[i]);
  lipvae_model_free(loaded);

  lipvae_model* bad = nullptr;
  CHECK(lipvae_model_load("/nonexistent/ckpt.lvck", &bad) == LIPVAE_ERR_IO);
  TempFile junk("junk.lvck");
  {
    std::ofstream out(junk.path, std::ios::binary);
    out << "j";
  }
  CHECK(lipvae_model_load(junk.path.string().c_str(), &bad) ==
        LIPVAE_ERR_FORMAT);

  lipvae_model_free(m);
  lipvae_dataset_free(ds);
}

TEST_CASE("unconstrained models refuse to report certified constants") {
  lipvae_model_config mc;
  lipvae_model_config_default(&mc);
  static const int64_t hidden[1] = {8};
  mc.input_dim = 9;
  mc.latent_dim = 3;
  mc.hidden = hidden;
  mc.hidden_count = 1;
  mc.lipschitz = 0;
  lipvae_train_config tc;
  lipvae_train_config_default(&tc);
  lipvae_model* m = nullptr;
  REQUIRE(lipvae_model_create(&mc, &tc, &m) == LIPVAE_OK);

  double a = 0, b = 0, c = 0;
  CHECK(lipvae_model_constants(m, &a, &b, &c) == LIPVAE_ERR_NOT_CERTIFIABLE);
  CHECK(std::strlen(lipvae_last_error()) > 0);
  lipvae_model_free(m);

  mc.latent_dim = -4;
  CHECK(lipvae_model_create(&mc, &tc, &m) == LIPVAE_ERR_INVALID_ARGUMENT);
  CHECK(lipvae_model_create(nullptr, &tc, &m) == LIPVAE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("robustness calculator matches the core exactly") {
  lipvae_cert_constants cases[4];
  cases[0] = {5.0, 5.0, 5.0, 0.1, 5, 8.0};
  cases[1] = {1.0, 1.0, 0.0, 0.05, 2, 0.5};
  cases[2] = {2.5, 0.7, 1.3, 0.0, 10, 3.0};
  cases[3] = {4.0, 2.0, 0.0, 0.4, 1, 2.0};
  const double deltas[4] = {0.0, 0.02, 0.3, 1.0};

  for (const auto& cc : cases) {
    lipvae::CertConstants core;
    core.decoder_lipschitz = cc.decoder_lipschitz;
    core.encoder_mean_lipschitz = cc.encoder_mean_lipschitz;
    core.encoder_std_lipschitz = cc.encoder_std_lipschitz;
    core.sigma_norm = cc.sigma_norm;
    core.latent_dim = cc.latent_dim;
    core.r = cc.r;

    for (double d : deltas) {
      double p1 = -1, p2 = -1, lb = -1;
      int branch = -1, p2min = -1;
      REQUIRE(lipvae_probability_bound(&cc, d, &p1, &p2, &lb, &branch,
                                       &p2min) == LIPVAE_OK);
      lipvae::ProbabilityBound want = lipvae::probability_bound(core, d);
      CHECK(p1 == want.p1);
      CHECK(p2 == want.p2);
      CHECK(lb == want.lower_bound);
      CHECK(branch == static_cast<int>(want.branch));
      CHECK((p2min != 0) == want.p2_is_min);
      CHECK(std::string(lipvae_tail_branch_name(branch)) ==
            lipvae::tail_branch_name(want.branch));
    }

    double m1 = 0, m2 = 0, margin = 0;
    int at_zero = 0;
    REQUIRE(lipvae_margin_bound(&cc, &m1, &m2, &margin, &at_zero) ==
            LIPVAE_OK);
    lipvae::MarginBound want = lipvae::margin_bound(core);
    if (want.m1) {
      CHECK(m1 == *want.m1);
    } else {
      CHECK(std::isnan(m1));
    }
    CHECK(m2 == want.m2);
    CHECK(margin == want.margin);
    CHECK((at_zero != 0) == want.m2_at_zero);

    REQUIRE(lipvae_global_margin(&cc, &m1, &m2, &margin, &at_zero) ==
            LIPVAE_OK);
    lipvae::MarginBound wg = lipvae::global_margin(core);
    CHECK(margin == wg.margin);
  }

  double lc = 0;
  REQUIRE(lipvae_log_c_of_dz(5, &lc) == LIPVAE_OK);
  CHECK(lc == lipvae::log_c_of_dz(5));
  CHECK(lipvae_log_c_of_dz(0, &lc) == LIPVAE_ERR_INVALID_ARGUMENT);

  lipvae_cert_constants bad = cases[0];
  bad.decoder_lipschitz = 0.0;
  double lb = 0;
  CHECK(lipvae_probability_bound(&bad, 0.1, nullptr, nullptr, &lb, nullptr,
                                 nullptr) == LIPVAE_ERR_INVALID_ARGUMENT);
  CHECK(lipvae_probability_bound(nullptr, 0.1, nullptr, nullptr, &lb, nullptr,
                                 nullptr) == LIPVAE_ERR_INVALID_ARGUMENT);
}

TEST_CASE("attacks and margins through the C interface match the core") {
  lipvae_dataset* ds = nullptr;
  REQUIRE(lipvae_dataset_synthetic(64, 16, 7, 3, &ds) == LIPVAE_OK);
  lipvae_model* m = make_small_model(17);
  REQUIRE(lipvae_model_train(m, ds, 1) == LIPVAE_OK);

  lipvae::TrainedVae core = small_core_model(17);
  lipvae::Dataset core_ds = lipvae::synthetic_blobs(64, 16, 7, 3);
  lipvae::train(core, core_ds, 1);

  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[i] = core_ds.images(2, i);

  lipvae_attack_config ac;
  lipvae_attack_config_default(&ac);
  ac.budget = 1.0;
  ac.steps = 10;
  ac.restarts = 2;
  ac.samples_per_step = 4;
  ac.final_samples = 50;
  ac.seed = 11;

  lipvae_attack_result* res = nullptr;
  REQUIRE(lipvae_attack_max_damage(m, x.data(), 1.0, &ac, &res) == LIPVAE_OK);
  REQUIRE(res != nullptr);

  lipvae::AttackConfig cc;
  cc.budget = 1.0;
  cc.steps = 10;
  cc.restarts = 2;
  cc.samples_per_step = 4;
  cc.final_samples = 50;
  cc.seed = 11;
  lipvae::AttackResult want =
      lipvae::max_damage_attack(core.model, core_ds.images.row(2).transpose(), 1.0, cc);

  CHECK(lipvae_attack_result_objective(res) == want.objective);
  CHECK(lipvae_attack_result_baseline(res) == want.baseline_objective);
  CHECK(lipvae_attack_result_r_probability(res) == want.r_probability);
  CHECK(lipvae_attack_result_max_delta_norm(res) == want.max_delta_norm);
  CHECK(lipvae_attack_result_best_restart(res) == want.best_restart);
  REQUIRE(lipvae_attack_result_delta_size(res) == 16);
  std::vector<double> delta(16);
  REQUIRE(lipvae_attack_result_delta(res, delta.data()) == LIPVAE_OK);
  for (int i = 0; i < 16; ++i) CHECK(delta[i] == want.delta[i]);

  REQUIRE(lipvae_attack_result_trace_size(res) == want.trace.size());
  std::vector<double> trace(want.trace.size());
  REQUIRE(lipvae_attack_result_trace(res, 0, trace.data()) == LIPVAE_OK);
  for (std::size_t i = 0; i < want.trace.size(); ++i)
    CHECK(trace[i] == want.trace[i]);
  REQUIRE(lipvae_attack_result_trace(res, 1, trace.data()) == LIPVAE_OK);
  for (std::size_t i = 0; i < want.best_trace.size(); ++i)
    CHECK(trace[i] == want.best_trace[i]);
  REQUIRE(lipvae_attack_result_restart_count(res) == 2);
  std::vector<double> finals(2);
  REQUIRE(lipvae_attack_result_trace(res, 2, finals.data()) == LIPVAE_OK);
  for (int i = 0; i < 2; ++i) CHECK(finals[i] == want.restart_objectives[i]);
  CHECK(lipvae_attack_result_trace(res, 3, trace.data()) != LIPVAE_OK);
  lipvae_attack_result_free(res);

  lipvae_attack_result* lat = nullptr;
  REQUIRE(lipvae_attack_latent(m, x.data(), x.data(), &ac, &lat) == LIPVAE_OK);
  CHECK(lipvae_attack_result_r_probability(lat) == -1.0);
  CHECK(lipvae_attack_result_objective(lat) >= 0.0);
  lipvae_attack_result_free(lat);

  lipvae_attack_config tmpl;
  lipvae_attack_config_default(&tmpl);
  tmpl.steps = 6;
  tmpl.samples_per_step = 4;
  lipvae_margin_estimate* est = nullptr;
  REQUIRE(lipvae_estimate_margin(m, x.data(), 1.0, 1.5, 0.5, 40, 2, 9, &tmpl,
                                 &est) == LIPVAE_OK);
  lipvae::AttackConfig core_tmpl;
  core_tmpl.steps = 6;
  core_tmpl.samples_per_step = 4;
  lipvae::MarginEstimate want_est = lipvae::estimate_margin(
      core.model, core_ds.images.row(2).transpose(), 1.0, 1.5, 0.5, 40, 2, 9,
      core_tmpl);

  CHECK(lipvae_margin_value(est) == want_est.margin);
  CHECK((lipvae_margin_found(est) != 0) == want_est.found);
  REQUIRE(lipvae_margin_probe_count(est) == want_est.probes.size());
  for (std::size_t k = 0; k < want_est.probes.size(); ++k) {
    double radius = 0;
    REQUIRE(lipvae_margin_probe_radius(est, k, &radius) == LIPVAE_OK);
    CHECK(radius == want_est.probes[k].radius);
    REQUIRE(lipvae_margin_probe_prob_count(est, k) ==
            want_est.probes[k].probabilities.size());
    std::vector<double> probs(want_est.probes[k].probabilities.size());
    REQUIRE(lipvae_margin_probe_probs(est, k, probs.data()) == LIPVAE_OK);
    for (std::size_t j = 0; j < probs.size(); ++j)
      CHECK(probs[j] == want_est.probes[k].probabilities[j]);
  }
  CHECK(lipvae_margin_probe_radius(est, want_est.probes.size(), nullptr) !=
        LIPVAE_OK);
  lipvae_margin_estimate_free(est);

  CHECK(lipvae_attack_max_damage(nullptr, x.data(), 1.0, &ac, &res) ==
        LIPVAE_ERR_INVALID_ARGUMENT);

  lipvae_model_free(m);
  lipvae_dataset_free(ds);
}