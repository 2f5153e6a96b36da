#include "checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "json.hpp"

namespace lipvae {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native little-endian");

namespace {

using nlohmann::json;

struct TensorRef {
  std::string name;
  const double* data;
  Index rows, cols;
};

void collect_net(const std::string& prefix, const Mlp& net,
                 std::vector<TensorRef>& out) {
  int i = 0;
  for (const auto& l : net.layers()) {
    out.push_back({prefix + ".w" + std::to_string(i), l.weight.data(),
                   l.weight.rows(), l.weight.cols()});
    out.push_back({prefix + ".b" + std::to_string(i), l.bias.data(), 1,
                   l.bias.size()});
    ++i;
  }
}

std::vector<TensorRef> collect_tensors(const TrainedVae& t) {
  std::vector<TensorRef> refs;
  collect_net("enc_mean", t.model.encoder_mean(), refs);
  if (t.model.has_std_net()) collect_net("enc_std", t.model.encoder_std(), refs);
  collect_net("dec", t.model.decoder(), refs);
  if (t.model.config().fixed_sigma) {
    const Vec& s = t.model.fixed_sigma_vec();
    refs.push_back({"sigma", s.data(), 1, s.size()});
  }
  for (std::size_t i = 0; i < t.adam.mw.size(); ++i) {
    const std::string n = std::to_string(i);
    refs.push_back({"adam.mw" + n, t.adam.mw[i].data(), t.adam.mw[i].rows(),
                    t.adam.mw[i].cols()});
    refs.push_back({"adam.vw" + n, t.adam.vw[i].data(), t.adam.vw[i].rows(),
                    t.adam.vw[i].cols()});
    refs.push_back({"adam.mb" + n, t.adam.mb[i].data(), 1,
                    t.adam.mb[i].size()});
    refs.push_back({"adam.vb" + n, t.adam.vb[i].data(), 1,
                    t.adam.vb[i].size()});
  }
  return refs;
}

json config_json(const TrainedVae& t) {
  const VaeConfig& m = t.model.config();
  json jm;
  jm["input_dim"] = m.input_dim;
  jm["latent_dim"] = m.latent_dim;
  jm["hidden"] = m.hidden;
  jm["lipschitz"] = m.lipschitz;
  jm["decoder_bound"] = m.decoder_bound;
  jm["encoder_mean_bound"] = m.encoder_mean_bound;
  jm["encoder_std_bound"] = m.encoder_std_bound;
  jm["fixed_sigma"] = m.fixed_sigma;
  jm["beta"] = m.beta;
  jm["ortho"] = {{"iterations", m.ortho.iterations},
                 {"order", m.ortho.order},
                 {"tolerance", m.ortho.tolerance},
                 {"safe_scaling", m.ortho.safe_scaling}};

  const TrainConfig& c = t.config;
  json jt;
  jt["epochs"] = c.epochs;
  jt["batch_size"] = c.batch_size;
  jt["learning_rate"] = c.learning_rate;
  jt["adam_beta1"] = c.adam_beta1;
  jt["adam_beta2"] = c.adam_beta2;
  jt["adam_eps"] = c.adam_eps;
  jt["seed"] = c.seed;
  jt["optimizer"] = c.optimizer;

  json j;
  j["format"] = kCheckpointFormat;
  j["model"] = jm;
  j["train"] = jt;
  j["state"] = {{"epochs_done", t.epochs_done}, {"adam_step", t.adam.step}};
  json hist = json::array();
  for (const auto& h : t.history) hist.push_back({h.elbo, h.recon_ll, h.kl});
  j["history"] = hist;
  return j;
}

struct TensorLoc {
  Index rows = 0, cols = 0;
  std::size_t offset = 0;
};

Mat fetch_mat(const std::map<std::string, TensorLoc>& table,
              const std::vector<double>& payload, const std::string& name,
              Index rows, Index cols) {
  const auto it = table.find(name);
  if (it == table.end()) {
    throw format_error("checkpoint is missing tensor \"" + name + "\"");
  }
  const TensorLoc& loc = it->second;
  if (loc.rows != rows || loc.cols != cols) {
    throw format_error("checkpoint tensor \"" + name +
                       "\" has unexpected shape");
  }
  const std::size_t count = std::size_t(rows) * std::size_t(cols);
  if (loc.offset + count > payload.size()) {
    throw format_error("checkpoint tensor \"" + name +
                       "\" exceeds the payload");
  }
  Mat m(rows, cols);
  std::memcpy(m.data(), payload.data() + loc.offset, count * sizeof(double));
  return m;
}

Vec fetch_vec(const std::map<std::string, TensorLoc>& table,
              const std::vector<double>& payload, const std::string& name,
              Index size) {
  const Mat m = fetch_mat(table, payload, name, 1, size);
  return m.row(0).transpose();
}

void fill_net(Mlp& net, const std::string& prefix,
              const std::map<std::string, TensorLoc>& table,
              const std::vector<double>& payload) {
  int i = 0;
  for (auto& l : net.mutable_layers()) {
    const std::string n = std::to_string(i);
    l.weight = fetch_mat(table, payload, prefix + ".w" + n, l.weight.rows(),
                         l.weight.cols());
    l.bias = fetch_vec(table, payload, prefix + ".b" + n, l.bias.size());
    ++i;
  }
}

}  // namespace

std::string checkpoint_bytes(const TrainedVae& t) {
  json j = config_json(t);

  const auto refs = collect_tensors(t);
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& r : refs) {
    table.push_back({{"name", r.name},
                     {"rows", r.rows},
                     {"cols", r.cols},
                     {"offset", offset}});
    offset += std::size_t(r.rows) * std::size_t(r.cols);
  }
  j["tensors"] = table;
  j["payload_doubles"] = offset;

  const std::string envelope = j.dump();
  std::string out;
  out.reserve(4 + envelope.size() + offset * sizeof(double));
  const auto len = static_cast<std::uint32_t>(envelope.size());
  out.append(reinterpret_cast<const char*>(&len), 4);
  out.append(envelope);
  for (const auto& r : refs) {
    out.append(reinterpret_cast<const char*>(r.data),
               std::size_t(r.rows) * std::size_t(r.cols) * sizeof(double));
  }
  return out;
}

void save_checkpoint(const TrainedVae& t, const std::string& path) {
  const std::string bytes = checkpoint_bytes(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("failed to write " + path);
}

TrainedVae load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 4) {
    throw format_error(path + " is not a checkpoint: file too short");
  }
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data(), 4);
  if (4 + std::size_t(len) > bytes.size()) {
    throw format_error(path + " is truncated: JSON envelope extends past EOF");
  }

  json j;
  try {
    j = json::parse(bytes.begin() + 4, bytes.begin() + 4 + len);
  } catch (const json::exception& e) {
    throw format_error(path + ": corrupt checkpoint envelope: " + e.what());
  }

  try {
    const std::string format = j.at("format").get<std::string>();
    if (format != kCheckpointFormat) {
      throw format_error(path + ": unsupported checkpoint format \"" + format +
                         "\", expected \"" + kCheckpointFormat + "\"");
    }

    const std::size_t payload_doubles =
        j.at("payload_doubles").get<std::size_t>();
    const std::size_t payload_bytes = bytes.size() - 4 - len;
    if (payload_bytes != payload_doubles * sizeof(double)) {
      throw format_error(
          path + ": payload is corrupt: expected " +
          std::to_string(payload_doubles * sizeof(double)) +
          " tensor bytes, found " + std::to_string(payload_bytes));
    }
    std::vector<double> payload(payload_doubles);
    std::memcpy(payload.data(), bytes.data() + 4 + len, payload_bytes);

    std::map<std::string, TensorLoc> table;
    for (const auto& e : j.at("tensors")) {
      TensorLoc loc;
      loc.rows = e.at("rows").get<Index>();
      loc.cols = e.at("cols").get<Index>();
      loc.offset = e.at("offset").get<std::size_t>();
      table[e.at("name").get<std::string>()] = loc;
    }

    const json& jm = j.at("model");
    VaeConfig cfg;
    cfg.input_dim = jm.at("input_dim").get<Index>();
    cfg.latent_dim = jm.at("latent_dim").get<Index>();
    cfg.hidden = jm.at("hidden").get<std::vector<Index>>();
    cfg.lipschitz = jm.at("lipschitz").get<bool>();
    cfg.decoder_bound = jm.at("decoder_bound").get<double>();
    cfg.encoder_mean_bound = jm.at("encoder_mean_bound").get<double>();
    cfg.encoder_std_bound = jm.at("encoder_std_bound").get<double>();
    cfg.fixed_sigma = jm.at("fixed_sigma").get<bool>();
    cfg.beta = jm.at("beta").get<double>();
    const json& jo = jm.at("ortho");
    cfg.ortho.iterations = jo.at("iterations").get<int>();
    cfg.ortho.order = jo.at("order").get<int>();
    cfg.ortho.tolerance = jo.at("tolerance").get<double>();
    cfg.ortho.safe_scaling = jo.at("safe_scaling").get<bool>();
    if (cfg.fixed_sigma) {
      cfg.sigma = fetch_vec(table, payload, "sigma", cfg.latent_dim);
    }

    TrainedVae t;
    t.model = VaeModel(cfg);

    const json& jt = j.at("train");
    t.config.epochs = jt.at("epochs").get<int>();
    t.config.batch_size = jt.at("batch_size").get<int>();
    t.config.learning_rate = jt.at("learning_rate").get<double>();
    t.config.adam_beta1 = jt.at("adam_beta1").get<double>();
    t.config.adam_beta2 = jt.at("adam_beta2").get<double>();
    t.config.adam_eps = jt.at("adam_eps").get<double>();
    t.config.seed = jt.at("seed").get<std::uint64_t>();
    t.config.optimizer = jt.at("optimizer").get<std::string>();

    t.epochs_done = j.at("state").at("epochs_done").get<int>();
    t.adam.step = j.at("state").at("adam_step").get<std::int64_t>();

    for (const auto& h : j.at("history")) {
      HistoryRow row;
      row.elbo = h.at(0).get<double>();
      row.recon_ll = h.at(1).get<double>();
      row.kl = h.at(2).get<double>();
      t.history.push_back(row);
    }

    fill_net(t.model.mutable_encoder_mean(), "enc_mean", table, payload);
    if (t.model.has_std_net()) {
      fill_net(t.model.mutable_encoder_std(), "enc_std", table, payload);
    }
    fill_net(t.model.mutable_decoder(), "dec", table, payload);

    if (t.adam.step > 0 || table.count("adam.mw0") > 0) {
      std::vector<const DenseLayer*> layers;
      for (const auto& l : t.model.encoder_mean().layers()) layers.push_back(&l);
      if (t.model.has_std_net()) {
        for (const auto& l : t.model.encoder_std().layers()) layers.push_back(&l);
      }
      for (const auto& l : t.model.decoder().layers()) layers.push_back(&l);
      for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string n = std::to_string(i);
        t.adam.mw.push_back(fetch_mat(table, payload, "adam.mw" + n,
                                      layers[i]->weight.rows(),
                                      layers[i]->weight.cols()));
        t.adam.vw.push_back(fetch_mat(table, payload, "adam.vw" + n,
                                      layers[i]->weight.rows(),
                                      layers[i]->weight.cols()));
        t.adam.mb.push_back(
            fetch_vec(table, payload, "adam.mb" + n, layers[i]->bias.size()));
        t.adam.vb.push_back(
            fetch_vec(table, payload, "adam.vb" + n, layers[i]->bias.size()));
      }
    }

    t.model.freeze();
    return t;
  } catch (const json::exception& e) {
    throw format_error(path + ": corrupt checkpoint envelope: " + e.what());
  }
}

}  // namespace lipvae
