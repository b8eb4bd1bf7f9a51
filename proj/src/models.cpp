#include "fedhar/models.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "fedhar/error.hpp"
#include "fedhar/nn/attention.hpp"
#include "fedhar/nn/layers.hpp"
#include "fedhar/nn/lstm.hpp"
#include "fedhar/nn/serialize.hpp"
#include "fedhar/rng.hpp"

namespace fedhar {

using nn::MatrixXr;
using nn::ParameterSet;

namespace {

constexpr int kCheckpointVersion = 1;

Eigen::Index as_index(std::size_t n) { return static_cast<Eigen::Index>(n); }

MatrixXr glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixXr m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

MatrixXr uniform(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
  MatrixXr m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

void add_dense(ParameterSet& p, const std::string& prefix, std::size_t out, std::size_t in,
               Rng& rng) {
  p.add(prefix + "W", glorot_uniform(as_index(out), as_index(in), rng));
  p.add(prefix + "b", MatrixXr::Zero(as_index(out), 1));
}

void add_layer_norm(ParameterSet& p, const std::string& prefix, std::size_t dim) {
  p.add(prefix + "gamma", MatrixXr::Ones(as_index(dim), 1));
  p.add(prefix + "beta", MatrixXr::Zero(as_index(dim), 1));
}

ParameterSet build_lstm(const LstmClassifierConfig& c, Rng& rng) {
  ParameterSet p;
  const auto h = as_index(c.hidden);
  const double limit = 1.0 / std::sqrt(static_cast<double>(c.hidden));
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l) + ".";
    const auto in = as_index(l == 0 ? c.input_dim : c.hidden);
    p.add(prefix + "W_ih", uniform(4 * h, in, limit, rng));
    p.add(prefix + "W_hh", uniform(4 * h, h, limit, rng));
    MatrixXr bias = MatrixXr::Zero(4 * h, 1);
    bias.middleRows(h, h).setOnes();  // forget gate
    p.add(prefix + "b", std::move(bias));
  }
  add_dense(p, "head.", c.classes, c.hidden, rng);
  return p;
}

ParameterSet build_transformer(const TransformerClassifierConfig& c, Rng& rng) {
  ParameterSet p;
  add_dense(p, "input.", c.d_model, c.input_dim, rng);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string prefix = "enc" + std::to_string(l) + ".";
    for (const char* role : {"q", "k", "v", "o"}) {
      p.add(prefix + "attn.W" + role, glorot_uniform(as_index(c.d_model), as_index(c.d_model), rng));
      p.add(prefix + "attn.b" + role, MatrixXr::Zero(as_index(c.d_model), 1));
    }
    add_layer_norm(p, prefix + "norm1.", c.d_model);
    add_dense(p, prefix + "ff1.", c.feedforward_dim, c.d_model, rng);
    add_dense(p, prefix + "ff2.", c.d_model, c.feedforward_dim, rng);
    add_layer_norm(p, prefix + "norm2.", c.d_model);
  }
  // Pooled features are layer-normalised to unit variance; a Glorot head on
  // top would start far from uniform logits.
  add_dense(p, "head.", c.classes, c.d_model, rng);
  p.at("head.W").setZero();
  return p;
}

void require_input(const ModelConfig& config, const Batch& batch) {
  if (batch.inputs.rows() != as_index(config.input_dim()) ||
      batch.inputs.cols() != batch.steps * batch.size() || batch.size() == 0) {
    throw DimensionError("model expects " + std::to_string(config.input_dim()) +
                         "-dim inputs, got batch " +
                         nn::shape_string(batch.inputs.rows(), batch.inputs.cols()) + " for " +
                         std::to_string(batch.size()) + " samples of " +
                         std::to_string(batch.steps) + " steps");
  }
}

// ---- LSTM classifier --------------------------------------------------------

struct LstmForward {
  std::vector<std::vector<nn::LstmCellCache<double>>> caches;  // [layer][step]
  MatrixXr top_hidden;                                          // final step, top layer
  MatrixXr logits;
};

LstmForward lstm_forward(const ParameterSet& p, const LstmClassifierConfig& c,
                         const Batch& batch, bool keep_cache) {
  const auto n = batch.size();
  const auto steps = batch.steps;
  const auto h = as_index(c.hidden);

  std::vector<MatrixXr> seq(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    seq[static_cast<std::size_t>(t)] = batch.inputs(Eigen::all, Eigen::seqN(t, n, steps));
  }

  LstmForward out;
  if (keep_cache) out.caches.resize(c.layers);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l) + ".";
    MatrixXr hs = MatrixXr::Zero(h, n);
    MatrixXr cs = MatrixXr::Zero(h, n);
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto step = nn::lstm_cell<double>(seq[static_cast<std::size_t>(t)], hs, cs, p, prefix);
      hs = std::move(step.h);
      cs = std::move(step.c);
      seq[static_cast<std::size_t>(t)] = hs;
      if (keep_cache) out.caches[l].push_back(std::move(step.cache));
    }
  }
  out.top_hidden = seq.back();
  out.logits = nn::dense(out.top_hidden, p.at("head.W"), p.at("head.b"));
  return out;
}

void lstm_backward(const ParameterSet& p, const LstmClassifierConfig& c, const LstmForward& fwd,
                   const MatrixXr& dlogits, ParameterSet& grads) {
  const auto head = nn::dense_backward(fwd.top_hidden, p.at("head.W"), dlogits);
  grads.at("head.W") += head.dw;
  grads.at("head.b") += head.db;

  const auto steps = fwd.caches.front().size();
  const auto n = dlogits.cols();
  const auto h = as_index(c.hidden);

  // Upstream gradient reaching each step's hidden output of the current layer.
  std::vector<MatrixXr> dh_in(steps, MatrixXr::Zero(h, n));
  dh_in.back() = head.dx;
  for (std::size_t l = c.layers; l-- > 0;) {
    const std::string prefix = "lstm" + std::to_string(l) + ".";
    MatrixXr dh_next = MatrixXr::Zero(h, n);
    MatrixXr dc_next = MatrixXr::Zero(h, n);
    for (std::size_t t = steps; t-- > 0;) {
      const MatrixXr dh = dh_in[t] + dh_next;
      auto g = nn::lstm_cell_backward<double>(fwd.caches[l][t], dh, dc_next, p, grads, prefix);
      dh_next = std::move(g.dh_prev);
      dc_next = std::move(g.dc_prev);
      dh_in[t] = std::move(g.dx);
    }
  }
}

// ---- Transformer classifier -------------------------------------------------

struct TransformerForward {
  std::vector<nn::EncoderLayerCache<double>> layers;
  MatrixXr pooled;
  MatrixXr logits;
};

TransformerForward transformer_forward(const ParameterSet& p, const TransformerClassifierConfig& c,
                                       const Batch& batch, bool keep_cache) {
  const auto n = batch.size();
  const auto steps = batch.steps;
  const auto d = as_index(c.d_model);

  MatrixXr x = nn::dense(batch.inputs, p.at("input.W"), p.at("input.b"));
  const MatrixXr pe = nn::positional_encoding<double>(steps, d);
  for (Eigen::Index b = 0; b < n; ++b) x.middleCols(b * steps, steps) += pe;

  TransformerForward out;
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    auto layer = nn::encoder_layer<double>(x, steps, p, "enc" + std::to_string(l) + ".",
                                           as_index(c.heads));
    x = std::move(layer.y);
    if (keep_cache) out.layers.push_back(std::move(layer.cache));
  }
  out.pooled.resize(d, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    out.pooled.col(b) = x.middleCols(b * steps, steps).rowwise().mean();
  }
  out.logits = nn::dense(out.pooled, p.at("head.W"), p.at("head.b"));
  return out;
}

void transformer_backward(const ParameterSet& p, const TransformerClassifierConfig& c,
                          const TransformerForward& fwd, const Batch& batch,
                          const MatrixXr& dlogits, ParameterSet& grads) {
  const auto head = nn::dense_backward(fwd.pooled, p.at("head.W"), dlogits);
  grads.at("head.W") += head.dw;
  grads.at("head.b") += head.db;

  const auto steps = batch.steps;
  const auto n = batch.size();
  MatrixXr dx(as_index(c.d_model), steps * n);
  for (Eigen::Index b = 0; b < n; ++b) {
    dx.middleCols(b * steps, steps) =
        (head.dx.col(b) / static_cast<double>(steps)).replicate(1, steps);
  }
  for (std::size_t l = c.encoder_layers; l-- > 0;) {
    dx = nn::encoder_layer_backward<double>(fwd.layers[l], dx, p, grads,
                                            "enc" + std::to_string(l) + ".");
  }
  const auto input = nn::dense_backward(batch.inputs, p.at("input.W"), dx);
  grads.at("input.W") += input.dw;
  grads.at("input.b") += input.db;
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
  return kind == ModelKind::lstm ? "lstm" : "transformer";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) noexcept {
  if (name == "lstm") return ModelKind::lstm;
  if (name == "transformer") return ModelKind::transformer;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (kind == ModelKind::lstm) {
    if (lstm.input_dim == 0 || lstm.hidden == 0 || lstm.layers == 0 || lstm.classes == 0) {
      throw ConfigError("lstm config sizes must be positive");
    }
  } else {
    const auto& t = transformer;
    if (t.input_dim == 0 || t.d_model == 0 || t.heads == 0 || t.encoder_layers == 0 ||
        t.feedforward_dim == 0 || t.classes == 0) {
      throw ConfigError("transformer config sizes must be positive");
    }
    if (t.d_model % t.heads != 0) {
      throw ConfigError("transformer heads (" + std::to_string(t.heads) +
                        ") must divide d_model (" + std::to_string(t.d_model) + ")");
    }
  }
}

std::size_t ModelConfig::input_dim() const noexcept {
  return kind == ModelKind::lstm ? lstm.input_dim : transformer.input_dim;
}

std::size_t ModelConfig::classes() const noexcept {
  return kind == ModelKind::lstm ? lstm.classes : transformer.classes;
}

nlohmann::json to_json(const ModelConfig& config) {
  nlohmann::json j = {{"kind", to_string(config.kind)}};
  if (config.kind == ModelKind::lstm) {
    j["input_dim"] = config.lstm.input_dim;
    j["hidden"] = config.lstm.hidden;
    j["layers"] = config.lstm.layers;
    j["classes"] = config.lstm.classes;
  } else {
    j["input_dim"] = config.transformer.input_dim;
    j["d_model"] = config.transformer.d_model;
    j["heads"] = config.transformer.heads;
    j["encoder_layers"] = config.transformer.encoder_layers;
    j["feedforward_dim"] = config.transformer.feedforward_dim;
    j["classes"] = config.transformer.classes;
  }
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig config;
  const auto kind_name = j.at("kind").get<std::string>();
  const auto kind = parse_model_kind(kind_name);
  if (!kind) throw ConfigError("unknown model kind '" + kind_name + "' (valid: lstm, transformer)");
  config.kind = *kind;
  if (config.kind == ModelKind::lstm) {
    config.lstm.input_dim = j.at("input_dim").get<std::size_t>();
    config.lstm.hidden = j.at("hidden").get<std::size_t>();
    config.lstm.layers = j.at("layers").get<std::size_t>();
    config.lstm.classes = j.at("classes").get<std::size_t>();
  } else {
    config.transformer.input_dim = j.at("input_dim").get<std::size_t>();
    config.transformer.d_model = j.at("d_model").get<std::size_t>();
    config.transformer.heads = j.at("heads").get<std::size_t>();
    config.transformer.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    config.transformer.feedforward_dim = j.at("feedforward_dim").get<std::size_t>();
    config.transformer.classes = j.at("classes").get<std::size_t>();
  }
  config.validate();
  return config;
}

ParameterSet build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x1417));
  return config.kind == ModelKind::lstm ? build_lstm(config.lstm, rng)
                                        : build_transformer(config.transformer, rng);
}

std::size_t expected_parameter_count(const ModelConfig& config) {
  if (config.kind == ModelKind::lstm) {
    const auto& c = config.lstm;
    std::size_t n = 0;
    for (std::size_t l = 0; l < c.layers; ++l) {
      const auto in = l == 0 ? c.input_dim : c.hidden;
      n += 4 * c.hidden * (in + c.hidden + 1);
    }
    return n + c.classes * c.hidden + c.classes;
  }
  const auto& c = config.transformer;
  const auto per_layer = 4 * (c.d_model * c.d_model + c.d_model) + 4 * c.d_model +
                         c.feedforward_dim * c.d_model + c.feedforward_dim +
                         c.d_model * c.feedforward_dim + c.d_model;
  return c.d_model * c.input_dim + c.d_model + c.encoder_layers * per_layer +
         c.classes * c.d_model + c.classes;
}

Batch make_batch(std::span<const WindowSample> windows) {
  Batch batch;
  const auto steps = static_cast<Eigen::Index>(kWindowLength);
  batch.inputs.resize(static_cast<Eigen::Index>(kFrameDim), steps * as_index(windows.size()));
  for (std::size_t b = 0; b < windows.size(); ++b) {
    batch.inputs.middleCols(as_index(b) * steps, steps) = windows[b].frames;
    batch.labels.push_back(index_of(windows[b].label));
  }
  return batch;
}

Batch make_batch(std::span<const WindowSample> windows, std::span<const std::size_t> indices) {
  Batch batch;
  const auto steps = static_cast<Eigen::Index>(kWindowLength);
  batch.inputs.resize(static_cast<Eigen::Index>(kFrameDim), steps * as_index(indices.size()));
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& w = windows[indices[b]];
    batch.inputs.middleCols(as_index(b) * steps, steps) = w.frames;
    batch.labels.push_back(index_of(w.label));
  }
  return batch;
}

MatrixXr class_scores(const ParameterSet& params, const ModelConfig& config, const Batch& batch) {
  require_input(config, batch);
  MatrixXr logits = config.kind == ModelKind::lstm
                        ? lstm_forward(params, config.lstm, batch, false).logits
                        : transformer_forward(params, config.transformer, batch, false).logits;
  if (!logits.allFinite()) throw NumericHealthError("forward pass produced non-finite logits");
  return logits;
}

MatrixXr forward_logits(const ParameterSet& params, const ModelConfig& config,
                        std::span<const WindowSample> windows) {
  return class_scores(params, config, make_batch(windows)).transpose();
}

LossResult loss_and_gradients(const ParameterSet& params, const ModelConfig& config,
                              const Batch& batch) {
  require_input(config, batch);
  LossResult out;
  out.grads = ParameterSet::zeros_like(params);
  if (config.kind == ModelKind::lstm) {
    const auto fwd = lstm_forward(params, config.lstm, batch, true);
    auto ce = nn::softmax_cross_entropy(fwd.logits, batch.labels);
    out.loss = ce.loss;
    lstm_backward(params, config.lstm, fwd, ce.dlogits, out.grads);
  } else {
    const auto fwd = transformer_forward(params, config.transformer, batch, true);
    auto ce = nn::softmax_cross_entropy(fwd.logits, batch.labels);
    out.loss = ce.loss;
    transformer_backward(params, config.transformer, fwd, batch, ce.dlogits, out.grads);
  }
  nn::check_finite(out.grads, "loss_and_gradients");
  return out;
}

Prediction prediction_from_logits(const Eigen::Ref<const nn::VectorXr>& logits) {
  const nn::VectorXr p = nn::softmax(logits);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return {gesture_at(static_cast<std::size_t>(best)), p(best)};
}

Prediction predict(const ParameterSet& params, const ModelConfig& config,
                   const WindowSample& window) {
  const MatrixXr logits = class_scores(params, config, make_batch(std::span(&window, 1)));
  return prediction_from_logits(logits.col(0));
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  nlohmann::json header = {{"format", "fedhar.checkpoint"},
                           {"version", kCheckpointVersion},
                           {"kind", to_string(checkpoint.config.kind)},
                           {"config", to_json(checkpoint.config)},
                           {"seed", checkpoint.seed},
                           {"provenance", checkpoint.provenance}};
  std::string text = header.dump();
  text.pop_back();  // reopen the object to append the parameter list verbatim
  text += ",\"parameters\":" + nn::parameters_to_json(checkpoint.params) + "}\n";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", std::string()) != "fedhar.checkpoint") {
      throw DataError(path.string() + " is not a checkpoint");
    }
    Checkpoint c;
    c.config = model_config_from_json(j.at("config"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.provenance = j.value("provenance", nlohmann::json::object());
    c.params = nn::parameters_from_json(j.at("parameters"));
    const auto reference = build_model(c.config, 0);
    nn::require_congruent(reference, c.params, "checkpoint parameters");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace fedhar
