#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gasseg/common.hpp"

namespace gasseg {

enum class CellType { lstm, gru };

/// The five sigmoid gates whose activations can be captured.
enum class GateTag { lstm_forget, lstm_input, lstm_output, gru_update, gru_reset };

using GateSet = std::set<GateTag>;

CellType cell_of(GateTag gate);
std::string_view to_string(GateTag gate);
std::string_view to_string(CellType cell);
/// Accepts "lstm_forget" or the short gate name ("forget", "update", ...).
GateTag parse_gate_tag(std::string_view name);
CellType parse_cell_type(std::string_view name);

/// Affine map feeding one gate: input (J x D), recurrent (J x J), bias (J).
struct GateWeights {
  Matrix input;
  Matrix recurrent;
  Vector bias;

  static GateWeights zeros(Eigen::Index units, Eigen::Index input_dim);
};

struct LstmParams {
  GateWeights forget, input, output, candidate;

  static LstmParams zeros(Eigen::Index units, Eigen::Index input_dim);
  Eigen::Index units() const { return forget.bias.size(); }
  Eigen::Index input_dim() const { return forget.input.cols(); }
};

struct GruParams {
  GateWeights update, reset, candidate;

  static GruParams zeros(Eigen::Index units, Eigen::Index input_dim);
  Eigen::Index units() const { return update.bias.size(); }
  Eigen::Index input_dim() const { return update.input.cols(); }
};

struct LstmStep {
  Vector h, c;
  Vector forget, input, output;
};

struct GruStep {
  Vector h;
  Vector update, reset;
};

/// One LSTM time step:
///   f = s(Wf x + Uf h + bf), i = s(Wi x + Ui h + bi), o = s(Wo x + Uo h + bo)
///   c = f*c_prev + i*tanh(Wc x + Uc h + bc),  h = o*tanh(c)
/// Throws DataError on shape mismatch.
LstmStep lstm_step(const LstmParams& params, const Vector& x, const Vector& h_prev,
                   const Vector& c_prev);

/// One GRU time step:
///   z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br)
///   h = (1-z)*h_prev + z*tanh(Wh x + Uh (r . h_prev) + bh)
GruStep gru_step(const GruParams& params, const Vector& x, const Vector& h_prev);

/// Activations of one gate across a sequence: T x J, values in (0, 1).
struct GateTrace {
  GateTag gate = GateTag::gru_update;
  int layer_index = 0;  ///< index among the recurrent layers (0 = first)
  Matrix values;
};

enum class Activation { relu, linear };

struct DenseLayer {
  Matrix weights;  ///< out x in
  Vector bias;
  Activation activation = Activation::relu;
  bool dropout = true;  ///< inverted dropout on this layer's output in train mode
};

struct LstmLayer {
  LstmParams params;
};

struct GruLayer {
  GruParams params;
};

using Layer = std::variant<DenseLayer, LstmLayer, GruLayer>;

/// Framewise stack of dense and recurrent layers.
struct Network {
  Eigen::Index input_dim = 0;
  double dropout_rate = 0.0;
  std::vector<Layer> layers;

  Eigen::Index output_dim() const;
  int recurrent_layer_count() const;
};

/// Throws ConfigError when layer dimensions do not chain.
void validate(const Network& net);

/// Same structure, all parameters zero.
Network zeros_like(const Network& net);

/// Visits every parameter tensor in a fixed order with a stable name.
/// `f(const std::string& name, M& tensor)` where M is Matrix or Vector
/// (const-qualified when `net` is const).
template <typename Net, typename F>
void for_each_parameter(Net& net, F&& f) {
  auto gate = [&f](const std::string& prefix, auto& g) {
    f(prefix + ".input", g.input);
    f(prefix + ".recurrent", g.recurrent);
    f(prefix + ".bias", g.bias);
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const std::string p = "layer" + std::to_string(k);
    std::visit(
        [&](auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, DenseLayer>) {
            f(p + ".dense.weights", layer.weights);
            f(p + ".dense.bias", layer.bias);
          } else if constexpr (std::is_same_v<L, LstmLayer>) {
            gate(p + ".lstm.forget", layer.params.forget);
            gate(p + ".lstm.input", layer.params.input);
            gate(p + ".lstm.output", layer.params.output);
            gate(p + ".lstm.candidate", layer.params.candidate);
          } else {
            gate(p + ".gru.update", layer.params.update);
            gate(p + ".gru.reset", layer.params.reset);
            gate(p + ".gru.candidate", layer.params.candidate);
          }
        },
        net.layers[k]);
  }
}

Eigen::Index parameter_count(const Network& net);
Vector flatten_parameters(const Network& net);
/// Inverse of flatten_parameters. Throws DataError on size mismatch.
void assign_parameters(Network& net, const Vector& flat);

/// Inverted dropout mask: entries are 0 or 1/(1-rate). Throws ConfigError
/// unless 0 <= rate < 1.
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

struct ForwardResult {
  Matrix outputs;                 ///< T x output_dim
  std::vector<GateTrace> traces;  ///< per recurrent layer, per captured gate
};

/// Runs the whole sequence (rows of `inputs` are frames). Dropout is active
/// only when `train_mode` is set, in which case `rng` must be non-null.
/// Throws ConfigError for a captured gate the cells do not have.
ForwardResult forward_sequence(const Network& net, const Matrix& inputs, const GateSet& capture,
                               bool train_mode = false, Rng* rng = nullptr);

enum class LossKind { reconstruction, prediction };

/// Per-utterance loss: sum over frames of mean squared error per dimension.
/// Reconstruction compares output t with input t; prediction compares output
/// t with input t+1 (the last output row is unused).
double sequence_loss(const Matrix& outputs, const Matrix& inputs, LossKind kind);

struct SequenceView {
  std::string_view id;
  const Matrix* frames = nullptr;
};

struct Gradients {
  Vector values;  ///< same order as flatten_parameters
  double loss = 0.0;
  long frames = 0;  ///< frames contributing to the loss
};

/// Exact gradients of the summed batch loss via backpropagation through
/// time. When `dropout_rng` is non-null the forward pass runs in train mode.
/// Throws NumericalError naming the utterance if its loss is non-finite.
Gradients bptt_gradients(const Network& net, std::span<const SequenceView> batch, LossKind kind,
                         Rng* dropout_rng = nullptr);

}  // namespace gasseg
