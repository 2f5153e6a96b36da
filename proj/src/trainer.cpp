#include "trainer.hpp"

#include <cmath>
#include <numeric>

#include "numerics.hpp"
#include "tape.hpp"

namespace lipvae {
namespace {

// Substream tag for weight initialization; epoch substreams use the epoch
// index, which stays far below this.
constexpr std::uint64_t kInitStream = 0x494e4954ull;

std::vector<DenseLayer*> collect_layers(VaeModel& m) {
  std::vector<DenseLayer*> out;
  for (auto& l : m.mutable_encoder_mean().mutable_layers()) out.push_back(&l);
  if (m.has_std_net()) {
    for (auto& l : m.mutable_encoder_std().mutable_layers()) out.push_back(&l);
  }
  for (auto& l : m.mutable_decoder().mutable_layers()) out.push_back(&l);
  return out;
}

void init_adam(AdamState& a, const std::vector<DenseLayer*>& layers) {
  a.mw.clear();
  a.vw.clear();
  a.mb.clear();
  a.vb.clear();
  for (const DenseLayer* l : layers) {
    a.mw.push_back(Mat::Zero(l->weight.rows(), l->weight.cols()));
    a.vw.push_back(Mat::Zero(l->weight.rows(), l->weight.cols()));
    a.mb.push_back(Vec::Zero(l->bias.size()));
    a.vb.push_back(Vec::Zero(l->bias.size()));
  }
  a.step = 0;
}

void check_adam(const AdamState& a, const std::vector<DenseLayer*>& layers) {
  require(a.mw.size() == layers.size() && a.vw.size() == layers.size() &&
              a.mb.size() == layers.size() && a.vb.size() == layers.size(),
          "optimizer state does not match the model's parameter list");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    require_shape(a.mw[i].rows() == layers[i]->weight.rows() &&
                      a.mw[i].cols() == layers[i]->weight.cols() &&
                      a.mb[i].size() == layers[i]->bias.size(),
                  "optimizer state tensor shape mismatch");
  }
}

std::vector<Index> shuffled_indices(Index n, SeededRng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    const auto j =
        static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

}  // namespace

TrainedVae make_untrained(const VaeConfig& model_cfg, const TrainConfig& cfg) {
  TrainedVae t;
  t.model = VaeModel(model_cfg);
  t.config = cfg;
  SeededRng root(cfg.seed);
  SeededRng init = root.substream(kInitStream);
  t.model.init_random(init);
  t.model.freeze();
  return t;
}

void train(TrainedVae& t, const Dataset& data, int epochs,
           const EpochCallback& callback) {
  require(epochs >= 0, "epoch count must be nonnegative");
  require(data.count() >= 1, "training data is empty");
  require_shape(data.dim() == t.model.config().input_dim,
                "dataset dimension does not match the model input");
  require(t.config.batch_size >= 1, "batch size must be positive");
  require(t.config.learning_rate > 0, "learning rate must be positive");

  const Index n = data.count();
  const Index dz = t.model.config().latent_dim;
  const int bs = t.config.batch_size;
  const double lr = t.config.learning_rate;
  const double b1 = t.config.adam_beta1;
  const double b2 = t.config.adam_beta2;
  const double ae = t.config.adam_eps;

  SeededRng root(t.config.seed);

  for (int e = 0; e < epochs; ++e) {
    const int epoch = t.epochs_done;
    SeededRng er = root.substream(static_cast<std::uint64_t>(epoch));
    const auto order = shuffled_indices(n, er);

    double sum_elbo = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    int batch_index = 0;
    for (Index start = 0; start < n; start += bs, ++batch_index) {
      const Index rows = std::min<Index>(bs, n - start);
      Mat x(rows, data.dim());
      for (Index i = 0; i < rows; ++i) {
        x.row(i) = data.images.row(order[static_cast<std::size_t>(start + i)]);
      }
      const Mat eps = er.normal_mat(rows, dz);

      std::vector<DenseLayer*> layers = collect_layers(t.model);
      if (t.adam.empty()) init_adam(t.adam, layers);
      check_adam(t.adam, layers);

      Tape tape;
      Mlp::TapeParams params;
      double elbo = 0.0;
      VaeModel::ElboNodes nodes;
      // Exploded weights can trip value checks (NaN posterior scale) deep in
      // the objective before it ever yields a non-finite number; both cases
      // are divergence and must name the offending step.
      try {
        nodes = t.model.elbo_tape(tape, x, eps, &params);
        elbo = tape.value(nodes.elbo)(0, 0);
      } catch (const std::invalid_argument& e) {
        throw numeric_error("training diverged at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(elbo)) {
        throw numeric_error("training diverged at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) +
                            ": objective is not finite");
      }
      sum_elbo += tape.value(nodes.recon_rows).sum() -
                  t.model.config().beta * tape.value(nodes.kl_rows).sum();
      sum_recon += tape.value(nodes.recon_rows).sum();
      sum_kl += tape.value(nodes.kl_rows).sum();

      tape.backward(nodes.elbo);
      t.adam.step += 1;
      const double c1 = 1.0 - std::pow(b1, double(t.adam.step));
      const double c2 = 1.0 - std::pow(b2, double(t.adam.step));
      require(params.weights.size() == layers.size() &&
                  params.biases.size() == layers.size(),
              "parameter enumeration mismatch");
      for (std::size_t i = 0; i < layers.size(); ++i) {
        // Ascent on the ELBO, so the descent gradient is negated.
        const Mat gw = -tape.grad(params.weights[i]);
        const Mat gb_row = -tape.grad(params.biases[i]);
        const Vec gb = gb_row.row(0).transpose();

        Mat& mw = t.adam.mw[i];
        Mat& vw = t.adam.vw[i];
        mw = b1 * mw + (1.0 - b1) * gw;
        vw = b2 * vw + (1.0 - b2) * gw.cwiseProduct(gw);
        layers[i]->weight -=
            (lr * (mw / c1).array() / ((vw / c2).array().sqrt() + ae))
                .matrix();

        Vec& mb = t.adam.mb[i];
        Vec& vb = t.adam.vb[i];
        mb = b1 * mb + (1.0 - b1) * gb;
        vb = b2 * vb + (1.0 - b2) * gb.cwiseProduct(gb);
        layers[i]->bias -=
            (lr * (mb / c1).array() / ((vb / c2).array().sqrt() + ae))
                .matrix();
      }
    }

    HistoryRow row;
    row.elbo = sum_elbo / double(n);
    row.recon_ll = sum_recon / double(n);
    row.kl = sum_kl / double(n);
    t.history.push_back(row);
    t.epochs_done += 1;
    t.model.freeze();
    if (callback) callback(epoch, row, t.model);
  }
  if (!t.model.frozen()) t.model.freeze();
}

}  // namespace lipvae
