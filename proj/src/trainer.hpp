#pragma once

#include "common.hpp"
#include "dataset.hpp"
#include "vae.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lipvae {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::string optimizer = "adam";
};

// Moment estimates per parameter tensor, in the model's enumeration order
// (encoder mean, encoder scale if any, decoder; weights and biases in
// parallel lists).
struct AdamState {
  std::vector<Mat> mw, vw;
  std::vector<Vec> mb, vb;
  std::int64_t step = 0;
  bool empty() const { return mw.empty() && mb.empty(); }
};

struct HistoryRow {
  double elbo = 0.0;
  double recon_ll = 0.0;
  double kl = 0.0;
};

// Everything needed to resume training or run inference.
struct TrainedVae {
  VaeModel model;
  TrainConfig config;
  AdamState adam;
  std::vector<HistoryRow> history;
  int epochs_done = 0;
};

// Model with randomly initialized weights drawn from the training seed.
TrainedVae make_untrained(const VaeConfig& model_cfg, const TrainConfig& cfg);

using EpochCallback =
    std::function<void(int epoch, const HistoryRow& row, const VaeModel&)>;

// Runs `epochs` additional epochs of minibatch Adam ascent on the beta-ELBO.
// Epoch e always consumes RNG substream e of the training seed, so a resumed
// run is bitwise identical to an uninterrupted one.  The model is frozen
// after every epoch (and before the callback).  Non-finite objectives abort
// with the offending epoch and batch index.
void train(TrainedVae& t, const Dataset& data, int epochs,
           const EpochCallback& callback = {});

}  // namespace lipvae
