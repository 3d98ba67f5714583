#include "gasseg/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "gasseg/adam.hpp"

namespace gasseg {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kInitRange = 0.08;

DenseLayer dense(Eigen::Index in, Eigen::Index out, Activation act, bool dropout) {
  return {Matrix::Zero(out, in), Vector::Zero(out), act, dropout};
}

Layer recurrent(CellType cell, Eigen::Index in, Eigen::Index units) {
  if (cell == CellType::lstm) return LstmLayer{LstmParams::zeros(units, in)};
  return GruLayer{GruParams::zeros(units, in)};
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::ae_grnn: return "ae_grnn";
    case Architecture::rpm_2layer: return "rpm_2layer";
    case Architecture::rpm_4layer: return "rpm_4layer";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "ae_grnn") return Architecture::ae_grnn;
  if (name == "rpm_2layer") return Architecture::rpm_2layer;
  if (name == "rpm_4layer") return Architecture::rpm_4layer;
  throw ConfigError("unknown architecture: " + std::string(name));
}

bool is_predictor(Architecture arch) { return arch != Architecture::ae_grnn; }

LossKind loss_kind(Architecture arch) {
  return is_predictor(arch) ? LossKind::prediction : LossKind::reconstruction;
}

void validate(const ModelConfig& c) {
  if (c.recurrent_units <= 0 || c.ff_units <= 0 || c.input_dim <= 0)
    throw ConfigError("model sizes must be positive");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
}

TrainedModel build(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  const Eigen::Index d = config.input_dim, j = config.recurrent_units, ff = config.ff_units;
  TrainedModel model;
  model.config = config;
  model.info.seed = seed;
  Network& net = model.network;
  net.input_dim = d;
  net.dropout_rate = config.dropout_rate;
  net.layers.push_back(dense(d, ff, Activation::relu, true));
  net.layers.push_back(recurrent(config.cell, ff, j));
  if (config.architecture == Architecture::rpm_2layer) {
    net.layers.push_back(dense(j, d, Activation::linear, false));
  } else {
    net.layers.push_back(recurrent(config.cell, j, j));
    net.layers.push_back(dense(j, ff, Activation::relu, true));
    net.layers.push_back(dense(ff, d, Activation::linear, false));
  }

  Rng rng(seed);
  std::uniform_real_distribution<double> init(-kInitRange, kInitRange);
  for_each_parameter(net, [&](const std::string& name, auto& t) {
    if (ends_with(name, ".bias")) return;
    for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = init(rng);
  });
  return model;
}

ModelOutput ae_forward(const TrainedModel& model, const Matrix& features, const GateSet& capture) {
  if (model.config.architecture != Architecture::ae_grnn)
    throw ConfigError("ae_forward needs an ae_grnn model");
  auto fwd = forward_sequence(model.network, features, capture);
  return {std::move(fwd.outputs), std::move(fwd.traces)};
}

ModelOutput rpm_forward(const TrainedModel& model, const Matrix& features, const GateSet& capture) {
  if (!is_predictor(model.config.architecture)) throw ConfigError("rpm_forward needs an rpm model");
  if (features.rows() < 2) throw DataError("prediction needs at least two frames");
  auto fwd = forward_sequence(model.network, features, capture);
  Matrix predictions = fwd.outputs.topRows(features.rows() - 1);
  return {std::move(predictions), std::move(fwd.traces)};
}

double ae_loss(const Matrix& reconstruction, const Matrix& target) {
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols())
    throw DataError("reconstruction and target shapes differ");
  return (target - reconstruction).squaredNorm() / static_cast<double>(target.cols());
}

double ae_loss(std::span<const Matrix> reconstructions, std::span<const Matrix> targets) {
  if (reconstructions.size() != targets.size()) throw DataError("batch sizes differ");
  double total = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n) total += ae_loss(reconstructions[n], targets[n]);
  return total;
}

double rpm_loss(const Matrix& predictions, const Matrix& sequence) {
  if (sequence.rows() < 2 || predictions.rows() != sequence.rows() - 1 || predictions.cols() != sequence.cols())
    throw DataError("predictions must have T-1 rows of the sequence width");
  return ae_loss(predictions, sequence.bottomRows(sequence.rows() - 1));
}

TrainResult train(TrainedModel model, std::span<const FeatureSequence> corpus, const TrainConfig& config) {
  if (corpus.empty()) throw DataError("training corpus is empty");
  if (config.epochs < 0 || config.batch_size <= 0) throw ConfigError("epochs must be >= 0 and batch_size > 0");
  const LossKind kind = loss_kind(model.config.architecture);

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  AdamHyperparams hyper;
  hyper.lr = config.lr;
  Vector params = flatten_parameters(model.network);
  AdamState adam = AdamState::fresh(params.size(), hyper);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  std::vector<SequenceView> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    long epoch_frames = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const FeatureSequence& fs = corpus[order[k]];
        batch.push_back({fs.utterance_id, &fs.frames});
      }
      Gradients grads;
      try {
        grads = bptt_gradients(model.network, batch, kind, &dropout_rng);
      } catch (const NumericalError& ex) {
        throw DivergenceError(std::string("training diverged at epoch ") + std::to_string(epoch + 1) + ": " +
                                  ex.what(),
                              model);
      }
      if (!grads.values.allFinite())
        throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch + 1), model);
      if (config.clip_norm > 0.0) {
        const double norm = grads.values.norm();
        if (norm > config.clip_norm) grads.values *= config.clip_norm / norm;
      }
      adam_update(params, grads.values, adam);
      assign_parameters(model.network, params);
      epoch_loss += grads.loss;
      epoch_frames += grads.frames;
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(std::max(epoch_frames, 1L)));
    model.info.epochs += 1;
    model.info.final_loss = result.loss_history.back();
  }
  result.model = std::move(model);
  return result;
}

void save(const TrainedModel& model, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["version"] = std::string(version_string());
  const ModelConfig& c = model.config;
  doc["config"] = {{"architecture", to_string(c.architecture)},
                   {"cell", to_string(c.cell)},
                   {"recurrent_units", c.recurrent_units},
                   {"ff_units", c.ff_units},
                   {"dropout_rate", c.dropout_rate},
                   {"input_dim", c.input_dim}};
  doc["seed"] = model.info.seed;
  doc["epochs"] = model.info.epochs;
  doc["final_loss"] = model.info.final_loss;
  auto& params = doc["parameters"] = nlohmann::json::object();
  for_each_parameter(model.network, [&](const std::string& name, const auto& t) {
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index col = 0; col < t.cols(); ++col) row_major.push_back(t(r, col));
    params[name] = {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(row_major)}};
  });
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

TrainedModel load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("format_version").get<int>() != kCheckpointVersion)
      throw DataError("checkpoint format version mismatch: " + path.string());
    const auto& jc = doc.at("config");
    ModelConfig c;
    c.architecture = parse_architecture(jc.at("architecture").get<std::string>());
    c.cell = parse_cell_type(jc.at("cell").get<std::string>());
    c.recurrent_units = jc.at("recurrent_units").get<int>();
    c.ff_units = jc.at("ff_units").get<int>();
    c.dropout_rate = jc.at("dropout_rate").get<double>();
    c.input_dim = jc.at("input_dim").get<int>();
    TrainedModel model = build(c, 0);
    model.info.seed = doc.at("seed").get<std::uint64_t>();
    model.info.epochs = doc.at("epochs").get<int>();
    model.info.final_loss = doc.at("final_loss").is_null() ? 0.0 : doc.at("final_loss").get<double>();
    const auto& params = doc.at("parameters");
    std::size_t seen = 0;
    for_each_parameter(model.network, [&](const std::string& name, auto& t) {
      const auto& p = params.at(name);
      if (p.at("rows").get<Eigen::Index>() != t.rows() || p.at("cols").get<Eigen::Index>() != t.cols())
        throw DataError("checkpoint parameter " + name + " has the wrong shape");
      const auto data = p.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != t.size())
        throw DataError("checkpoint parameter " + name + " is truncated");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index col = 0; col < t.cols(); ++col) t(r, col) = data[k++];
      ++seen;
    });
    if (seen != params.size()) throw DataError("checkpoint has unexpected parameters");
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + ex.what());
  } catch (const ConfigError& ex) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + ex.what());
  }
}

}  // namespace gasseg
