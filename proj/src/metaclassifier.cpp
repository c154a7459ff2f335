#include "artstyle/metaclassifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <numeric>

namespace artstyle {

LayerLayout LayerLayout::for_stack(std::size_t n_models, std::size_t class_count,
                                   std::vector<std::size_t> hidden_widths, double dropout_rate) {
  LayerLayout layout;
  layout.hidden_widths = std::move(hidden_widths);
  layout.dropout_rate = dropout_rate;
  layout.input_dim = n_models * class_count;
  layout.output_dim = class_count;
  layout.validate();
  return layout;
}

void LayerLayout::validate() const {
  if (hidden_widths.empty() || hidden_widths.size() > 2) {
    throw DataError("meta layout: need one or two hidden layers");
  }
  for (auto w : hidden_widths) {
    if (w == 0) throw DataError("meta layout: hidden widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw DataError("meta layout: dropout rate must be in [0, 1)");
  if (input_dim == 0 || output_dim == 0) throw DataError("meta layout: input and output dims must be positive");
  if (input_dim % output_dim != 0) throw DataError("meta layout: input dim must be a multiple of the class count");
}

std::size_t MetaClassifier::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

MetaClassifier init_meta(const LayerLayout& layout, std::uint64_t seed) {
  layout.validate();
  MetaClassifier meta{layout, {}, seed};
  Rng rng(seed);
  std::vector<std::size_t> dims{layout.input_dim};
  dims.insert(dims.end(), layout.hidden_widths.begin(), layout.hidden_widths.end());
  dims.push_back(layout.output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer{dims[l], dims[l + 1], std::vector<double>(dims[l] * dims[l + 1]),
                     std::vector<double>(dims[l + 1], 0.0)};
    const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
    for (auto& w : layer.weights) w = scale * rng.normal();
    meta.layers.push_back(std::move(layer));
  }
  return meta;
}

namespace {

// z = W a + b
void affine(const DenseLayer& layer, std::span<const double> in, std::vector<double>& out) {
  out.assign(layer.outputs, 0.0);
  for (std::size_t o = 0; o < layer.outputs; ++o) {
    const double* w = layer.weights.data() + o * layer.inputs;
    double acc = layer.biases[o];
    for (std::size_t i = 0; i < layer.inputs; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
}

void softmax_inplace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

struct Trace {
  std::vector<std::vector<double>> inputs;  // input to each dense layer
  std::vector<std::vector<double>> pre;     // pre-activation of each hidden layer
  std::vector<std::vector<double>> masks;   // per hidden layer; empty when dropout is off
  std::vector<double> probs;
};

Trace run_forward(const MetaClassifier& meta, std::span<const double> features, Rng* dropout_rng) {
  if (features.size() != meta.layout.input_dim) {
    throw DataError("meta forward: feature length " + std::to_string(features.size()) + " != input dim " +
                    std::to_string(meta.layout.input_dim));
  }
  Trace t;
  const std::size_t hidden = meta.layers.size() - 1;
  t.inputs.emplace_back(features.begin(), features.end());
  const double p = meta.layout.dropout_rate;
  std::vector<double> z;
  for (std::size_t l = 0; l < hidden; ++l) {
    affine(meta.layers[l], t.inputs.back(), z);
    t.pre.push_back(z);
    std::vector<double> mask;
    if (dropout_rng && p > 0.0) {
      mask.resize(z.size());
      for (auto& m : mask) m = dropout_rng->bernoulli(p) ? 0.0 : 1.0 / (1.0 - p);
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = std::max(0.0, z[i]);
      if (!mask.empty()) z[i] *= mask[i];
    }
    t.masks.push_back(std::move(mask));
    t.inputs.push_back(z);
  }
  affine(meta.layers.back(), t.inputs.back(), t.probs);
  softmax_inplace(t.probs);
  return t;
}

double weight_for(std::span<const double> class_weights, std::size_t label) {
  return class_weights.empty() ? 1.0 : class_weights[label];
}

}  // namespace

ProbabilityVector forward(const MetaClassifier& meta, std::span<const double> features, bool training, Rng* rng) {
  if (training && !rng) throw std::invalid_argument("forward: training mode needs a generator");
  auto t = run_forward(meta, features, training ? rng : nullptr);
  return ProbabilityVector::from_values(std::move(t.probs), 1e-9);
}

double loss(std::span<const double> probs, std::size_t label, std::span<const double> class_weights) {
  if (label >= probs.size()) throw DataError("loss: label out of range");
  if (!class_weights.empty() && class_weights.size() != probs.size()) {
    throw DataError("loss: class weight count does not match class count");
  }
  return -weight_for(class_weights, label) * std::log(probs[label] + kLogEpsilon);
}

std::vector<DenseLayer> loss_gradient(const MetaClassifier& meta, std::span<const double> features, std::size_t label,
                                      std::span<const double> class_weights, Rng* dropout_rng, double* loss_out) {
  const auto t = run_forward(meta, features, dropout_rng);
  const std::size_t m = t.probs.size();
  if (label >= m) throw DataError("loss gradient: label out of range");
  const double w = weight_for(class_weights, label);
  if (loss_out) *loss_out = loss(t.probs, label, class_weights);

  // d/dz of -w ln(p_y + eps) through the softmax
  const double py = t.probs[label];
  const double scale = w * py / (py + kLogEpsilon);
  std::vector<double> delta(m);
  for (std::size_t j = 0; j < m; ++j) delta[j] = scale * (t.probs[j] - (j == label ? 1.0 : 0.0));

  std::vector<DenseLayer> grads(meta.layers.size());
  for (std::size_t l = meta.layers.size(); l-- > 0;) {
    const auto& layer = meta.layers[l];
    const auto& in = t.inputs[l];
    auto& g = grads[l];
    g.inputs = layer.inputs;
    g.outputs = layer.outputs;
    g.biases = delta;
    g.weights.assign(layer.weights.size(), 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      double* row = g.weights.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) row[i] = delta[o] * in[i];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.inputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* wrow = layer.weights.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] += wrow[i] * delta[o];
    }
    // back through dropout and the rectifier of hidden layer l-1
    const auto& pre = t.pre[l - 1];
    const auto& mask = t.masks[l - 1];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (pre[i] <= 0.0) prev[i] = 0.0;
      else if (!mask.empty()) prev[i] *= mask[i];
    }
    delta = std::move(prev);
  }
  return grads;
}

double gradient_check(const MetaClassifier& meta, std::span<const double> features, std::size_t label, double epsilon,
                      std::span<const double> class_weights) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw DataError("gradient check: epsilon must be in [1e-7, 1e-3]");
  const auto analytic = loss_gradient(meta, features, label, class_weights);
  MetaClassifier probe = meta;
  auto eval = [&] { return loss(run_forward(probe, features, nullptr).probs, label, class_weights); };
  double worst = 0.0;
  auto check = [&](double& param, double a) {
    const double saved = param;
    param = saved + epsilon;
    const double up = eval();
    param = saved - epsilon;
    const double down = eval();
    param = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    for (std::size_t k = 0; k < probe.layers[l].weights.size(); ++k) check(probe.layers[l].weights[k], analytic[l].weights[k]);
    for (std::size_t k = 0; k < probe.layers[l].biases.size(); ++k) check(probe.layers[l].biases[k], analytic[l].biases[k]);
  }
  return worst;
}

void FeatureSet::add(std::span<const double> features, int label) {
  if (dim == 0 && labels.empty()) dim = features.size();
  if (features.size() != dim) throw DataError("feature set: inconsistent feature length");
  values.insert(values.end(), features.begin(), features.end());
  labels.push_back(label);
}

void TrainConfig::validate(std::size_t class_count) const {
  if (!(std::isfinite(learning_rate) && learning_rate >= 0.0)) throw DataError("train config: learning rate must be >= 0");
  if (!(std::isfinite(momentum) && momentum >= 0.0 && momentum < 1.0)) throw DataError("train config: momentum must be in [0, 1)");
  if (batch_size == 0) throw DataError("train config: batch size must be at least 1");
  if (early_stop_patience == 0) throw DataError("train config: patience must be at least 1");
  if (!class_weights.empty()) {
    if (class_weights.size() != class_count) {
      throw DataError("train config: " + std::to_string(class_weights.size()) + " class weights for " +
                      std::to_string(class_count) + " classes");
    }
    for (double w : class_weights) {
      if (!(std::isfinite(w) && w > 0.0)) throw DataError("train config: class weights must be positive");
    }
  }
}

double accuracy_of(const MetaClassifier& meta, const FeatureSet& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto probs = run_forward(meta, data.row(i), nullptr).probs;
    const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (best == static_cast<std::size_t>(data.labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

namespace {

void check_labels(const FeatureSet& data, std::size_t dim, std::size_t classes, const char* name) {
  if (data.size() > 0 && data.dim != dim) {
    throw DataError(std::string("train: ") + name + " feature dim " + std::to_string(data.dim) + " != layout input dim " +
                    std::to_string(dim));
  }
  for (int y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw DataError(std::string("train: invalid label in ") + name);
  }
}

bool all_finite(const MetaClassifier& meta) {
  for (const auto& l : meta.layers) {
    for (double v : l.weights) if (!std::isfinite(v)) return false;
    for (double v : l.biases) if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

TrainResult train_meta(const MetaClassifier& meta, const FeatureSet& train, const FeatureSet& validation,
                       const TrainConfig& config) {
  meta.layout.validate();
  config.validate(meta.layout.output_dim);
  if (train.size() == 0) throw DataError("train: empty training set");
  if (validation.size() == 0) throw DataError("train: empty validation set");
  check_labels(train, meta.layout.input_dim, meta.layout.output_dim, "training set");
  check_labels(validation, meta.layout.input_dim, meta.layout.output_dim, "validation set");

  MetaClassifier current = meta;
  TrainResult result{meta, {}};
  std::vector<DenseLayer> velocity = meta.layers;
  for (auto& v : velocity) {
    std::fill(v.weights.begin(), v.weights.end(), 0.0);
    std::fill(v.biases.begin(), v.biases.end(), 0.0);
  }
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<DenseLayer> sum;
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        double item_loss = 0.0;
        auto g = loss_gradient(current, train.row(i), static_cast<std::size_t>(train.labels[i]), config.class_weights,
                               current.layout.dropout_rate > 0.0 ? &rng : nullptr, &item_loss);
        batch_loss += item_loss;
        if (sum.empty()) {
          sum = std::move(g);
          continue;
        }
        for (std::size_t l = 0; l < sum.size(); ++l) {
          for (std::size_t j = 0; j < sum[l].weights.size(); ++j) sum[l].weights[j] += g[l].weights[j];
          for (std::size_t j = 0; j < sum[l].biases.size(); ++j) sum[l].biases[j] += g[l].biases[j];
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw RuntimeFailure("train: non-finite loss at epoch " + std::to_string(epoch) +
                             "; lower the learning rate (currently " + format_double(config.learning_rate) + ")");
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t l = 0; l < sum.size(); ++l) {
        auto& layer = current.layers[l];
        auto& vel = velocity[l];
        for (std::size_t j = 0; j < layer.weights.size(); ++j) {
          vel.weights[j] = config.momentum * vel.weights[j] - config.learning_rate * (sum[l].weights[j] * inv);
          layer.weights[j] += vel.weights[j];
        }
        for (std::size_t j = 0; j < layer.biases.size(); ++j) {
          vel.biases[j] = config.momentum * vel.biases[j] - config.learning_rate * (sum[l].biases[j] * inv);
          layer.biases[j] += vel.biases[j];
        }
      }
      if (!all_finite(current)) {
        throw RuntimeFailure("train: parameters diverged at epoch " + std::to_string(epoch) +
                             "; lower the learning rate (currently " + format_double(config.learning_rate) + ")");
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    double total_loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto probs = run_forward(current, train.row(i), nullptr).probs;
      total_loss += loss(probs, static_cast<std::size_t>(train.labels[i]), config.class_weights);
      const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      if (best == static_cast<std::size_t>(train.labels[i])) ++hits;
    }
    rec.train_loss = total_loss / static_cast<double>(train.size());
    rec.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    rec.validation_accuracy = accuracy_of(current, validation);
    result.history.epochs.push_back(rec);

    if (rec.validation_accuracy > best_val) {
      best_val = rec.validation_accuracy;
      result.model = current;
      result.history.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  return result;
}

std::string parameter_digest(const MetaClassifier& meta) {
  std::string bytes;
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_double = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    put_u64(bits);
  };
  put_u64(meta.layout.input_dim);
  put_u64(meta.layout.output_dim);
  put_u64(meta.layout.hidden_widths.size());
  for (auto w : meta.layout.hidden_widths) put_u64(w);
  put_double(meta.layout.dropout_rate);
  for (const auto& l : meta.layers) {
    for (double w : l.weights) put_double(w);
    for (double b : l.biases) put_double(b);
  }
  return sha256_hex(bytes);
}

std::string serialize_checkpoint(const MetaClassifier& meta) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : meta.layers) {
    layers.push_back({{"inputs", l.inputs}, {"outputs", l.outputs}, {"weights", l.weights}, {"biases", l.biases}});
  }
  nlohmann::json doc = {{"format", "artstyle-meta-v1"},
                        {"layout",
                         {{"input_dim", meta.layout.input_dim},
                          {"output_dim", meta.layout.output_dim},
                          {"hidden_widths", meta.layout.hidden_widths},
                          {"dropout_rate", meta.layout.dropout_rate}}},
                        {"seed", meta.seed},
                        {"layers", layers},
                        {"digest", parameter_digest(meta)}};
  return doc.dump(1) + "\n";
}

MetaClassifier parse_checkpoint(std::string_view json_text) {
  MetaClassifier meta;
  std::string stored_digest;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    if (doc.value("format", std::string{}) != "artstyle-meta-v1") throw DataError("unknown checkpoint format");
    const auto& layout = doc.at("layout");
    meta.layout.input_dim = layout.at("input_dim").get<std::size_t>();
    meta.layout.output_dim = layout.at("output_dim").get<std::size_t>();
    meta.layout.hidden_widths = layout.at("hidden_widths").get<std::vector<std::size_t>>();
    meta.layout.dropout_rate = layout.at("dropout_rate").get<double>();
    meta.layout.validate();
    meta.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& l : doc.at("layers")) {
      DenseLayer layer{l.at("inputs").get<std::size_t>(), l.at("outputs").get<std::size_t>(),
                       l.at("weights").get<std::vector<double>>(), l.at("biases").get<std::vector<double>>()};
      meta.layers.push_back(std::move(layer));
    }
    stored_digest = doc.at("digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  std::vector<std::size_t> dims{meta.layout.input_dim};
  dims.insert(dims.end(), meta.layout.hidden_widths.begin(), meta.layout.hidden_widths.end());
  dims.push_back(meta.layout.output_dim);
  if (meta.layers.size() + 1 != dims.size()) throw DataError("checkpoint: layer count does not match layout");
  for (std::size_t l = 0; l < meta.layers.size(); ++l) {
    const auto& layer = meta.layers[l];
    if (layer.inputs != dims[l] || layer.outputs != dims[l + 1] || layer.weights.size() != dims[l] * dims[l + 1] ||
        layer.biases.size() != dims[l + 1]) {
      throw DataError("checkpoint: layer " + std::to_string(l) + " shape does not match layout");
    }
  }
  if (!all_finite(meta)) throw DataError("checkpoint: non-finite parameter");
  if (parameter_digest(meta) != stored_digest) throw DataError("checkpoint: digest mismatch");
  return meta;
}

MetaClassifier load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_history(const TrainHistory& history) {
  std::string out = "epoch,train_loss,train_accuracy,val_accuracy\n";
  for (const auto& e : history.epochs) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.train_accuracy) + ',' +
           format_double(e.validation_accuracy) + '\n';
  }
  return out;
}

}  // namespace artstyle
