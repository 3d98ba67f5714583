#include "gasseg/grnn.hpp"

#include <cmath>

namespace gasseg {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

template <typename Derived>
Vector sigmoid(const Eigen::MatrixBase<Derived>& a) {
  return a.unaryExpr([](double v) { return sigmoid(v); });
}

void check_gate(const GateWeights& g, Eigen::Index units, Eigen::Index input_dim) {
  if (g.input.rows() != units || g.input.cols() != input_dim || g.recurrent.rows() != units ||
      g.recurrent.cols() != units || g.bias.size() != units)
    throw DataError("gate weight shapes are inconsistent");
}

void check_step(Eigen::Index units, Eigen::Index input_dim, const Vector& x, const Vector& h_prev) {
  if (x.size() != input_dim) throw DataError("input vector has wrong dimension");
  if (h_prev.size() != units) throw DataError("previous hidden state has wrong dimension");
}

Vector affine(const GateWeights& g, const Vector& x, const Vector& h) {
  return g.input * x + g.recurrent * h + g.bias;
}

// Gates stacked row-wise so one product serves all of them.
struct Stacked {
  Matrix input;      // (k*J) x D
  Matrix recurrent;  // (k*J) x J
  Vector bias;
};

Stacked stack(std::initializer_list<const GateWeights*> gates) {
  const Eigen::Index j = (*gates.begin())->bias.size();
  const Eigen::Index d = (*gates.begin())->input.cols();
  const auto k = static_cast<Eigen::Index>(gates.size());
  Stacked s{Matrix(k * j, d), Matrix(k * j, j), Vector(k * j)};
  Eigen::Index row = 0;
  for (const GateWeights* g : gates) {
    s.input.middleRows(row, j) = g->input;
    s.recurrent.middleRows(row, j) = g->recurrent;
    s.bias.segment(row, j) = g->bias;
    row += j;
  }
  return s;
}

void unstack_add(const Matrix& d_input, const Matrix& d_recurrent, const Vector& d_bias,
                 std::initializer_list<GateWeights*> gates) {
  const Eigen::Index j = (*gates.begin())->bias.size();
  Eigen::Index row = 0;
  for (GateWeights* g : gates) {
    g->input += d_input.middleRows(row, j);
    g->recurrent += d_recurrent.middleRows(row, j);
    g->bias += d_bias.segment(row, j);
    row += j;
  }
}

Matrix shifted_down(const Matrix& h) {
  Matrix prev = Matrix::Zero(h.rows(), h.cols());
  if (h.rows() > 1) prev.bottomRows(h.rows() - 1) = h.topRows(h.rows() - 1);
  return prev;
}

struct DenseTape {
  Matrix input;
  Matrix pre;
  Matrix mask;  // empty when dropout is off
};

struct LstmTape {
  Matrix input;
  Matrix forget, in, out, cand, c, h;
};

struct GruTape {
  Matrix input;
  Matrix update, reset, cand, h;
};

using Tape = std::variant<DenseTape, LstmTape, GruTape>;

Matrix dense_forward(const DenseLayer& layer, const Matrix& x, double rate, bool train, Rng* rng,
                     DenseTape* tape) {
  Matrix pre = x * layer.weights.transpose();
  pre.rowwise() += layer.bias.transpose();
  Matrix y = layer.activation == Activation::relu ? Matrix(pre.cwiseMax(0.0)) : pre;
  Matrix mask;
  if (train && layer.dropout && rate > 0.0) {
    mask = dropout_mask(y.rows(), y.cols(), rate, *rng);
    y = y.cwiseProduct(mask);
  }
  if (tape) *tape = DenseTape{x, std::move(pre), std::move(mask)};
  return y;
}

Matrix lstm_forward(const LstmParams& p, const Matrix& x, LstmTape* tape, LstmTape& scratch) {
  const Eigen::Index steps = x.rows(), j = p.units();
  const Stacked s = stack({&p.forget, &p.input, &p.output, &p.candidate});
  Matrix proj = x * s.input.transpose();
  proj.rowwise() += s.bias.transpose();

  LstmTape& t = tape ? *tape : scratch;
  t.input = x;
  for (Matrix* m : {&t.forget, &t.in, &t.out, &t.cand, &t.c, &t.h}) m->resize(steps, j);
  Vector h = Vector::Zero(j), c = Vector::Zero(j);
  for (Eigen::Index step = 0; step < steps; ++step) {
    const Vector a = proj.row(step).transpose() + s.recurrent * h;
    const Vector f = sigmoid(a.segment(0, j));
    const Vector i = sigmoid(a.segment(j, j));
    const Vector o = sigmoid(a.segment(2 * j, j));
    const Vector g = a.segment(3 * j, j).array().tanh().matrix();
    c = f.cwiseProduct(c) + i.cwiseProduct(g);
    h = o.cwiseProduct(c.array().tanh().matrix());
    t.forget.row(step) = f.transpose();
    t.in.row(step) = i.transpose();
    t.out.row(step) = o.transpose();
    t.cand.row(step) = g.transpose();
    t.c.row(step) = c.transpose();
    t.h.row(step) = h.transpose();
  }
  if (!t.h.allFinite() || !t.c.allFinite()) throw NumericalError("non-finite LSTM state");
  return t.h;
}

Matrix gru_forward(const GruParams& p, const Matrix& x, GruTape* tape, GruTape& scratch) {
  const Eigen::Index steps = x.rows(), j = p.units();
  const Stacked s = stack({&p.update, &p.reset});
  Matrix proj = x * s.input.transpose();
  proj.rowwise() += s.bias.transpose();
  Matrix cand_proj = x * p.candidate.input.transpose();
  cand_proj.rowwise() += p.candidate.bias.transpose();

  GruTape& t = tape ? *tape : scratch;
  t.input = x;
  for (Matrix* m : {&t.update, &t.reset, &t.cand, &t.h}) m->resize(steps, j);
  Vector h = Vector::Zero(j);
  for (Eigen::Index step = 0; step < steps; ++step) {
    const Vector a = proj.row(step).transpose() + s.recurrent * h;
    const Vector z = sigmoid(a.segment(0, j));
    const Vector r = sigmoid(a.segment(j, j));
    const Vector g = (cand_proj.row(step).transpose() + p.candidate.recurrent * r.cwiseProduct(h))
                         .array()
                         .tanh()
                         .matrix();
    h = (Vector::Ones(j) - z).cwiseProduct(h) + z.cwiseProduct(g);
    t.update.row(step) = z.transpose();
    t.reset.row(step) = r.transpose();
    t.cand.row(step) = g.transpose();
    t.h.row(step) = h.transpose();
  }
  if (!t.h.allFinite()) throw NumericalError("non-finite GRU state");
  return t.h;
}

Matrix dense_backward(const DenseLayer& layer, const DenseTape& t, const Matrix& dy, DenseLayer& grad) {
  Matrix dz = t.mask.size() ? Matrix(dy.cwiseProduct(t.mask)) : dy;
  if (layer.activation == Activation::relu) dz = dz.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
  grad.weights += dz.transpose() * t.input;
  grad.bias += dz.colwise().sum().transpose();
  return dz * layer.weights;
}

Matrix lstm_backward(const LstmParams& p, const LstmTape& t, const Matrix& dy, LstmParams& grad) {
  const Eigen::Index steps = dy.rows(), j = p.units();
  const Stacked s = stack({&p.forget, &p.input, &p.output, &p.candidate});
  Matrix d_pre(steps, 4 * j);
  Vector dh_next = Vector::Zero(j), dc_next = Vector::Zero(j);
  for (Eigen::Index step = steps - 1; step >= 0; --step) {
    const Vector f = t.forget.row(step).transpose();
    const Vector i = t.in.row(step).transpose();
    const Vector o = t.out.row(step).transpose();
    const Vector g = t.cand.row(step).transpose();
    const Vector tc = t.c.row(step).transpose().array().tanh().matrix();
    const Vector c_prev = step > 0 ? Vector(t.c.row(step - 1).transpose()) : Vector::Zero(j);

    const Vector dh = dy.row(step).transpose() + dh_next;
    const Vector dc = dc_next + dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
    d_pre.block(step, 0, 1, j) =
        (dc.cwiseProduct(c_prev).array() * f.array() * (1.0 - f.array())).transpose();
    d_pre.block(step, j, 1, j) = (dc.cwiseProduct(g).array() * i.array() * (1.0 - i.array())).transpose();
    d_pre.block(step, 2 * j, 1, j) =
        (dh.cwiseProduct(tc).array() * o.array() * (1.0 - o.array())).transpose();
    d_pre.block(step, 3 * j, 1, j) = (dc.cwiseProduct(i).array() * (1.0 - g.array().square())).transpose();
    dc_next = dc.cwiseProduct(f);
    dh_next = s.recurrent.transpose() * d_pre.row(step).transpose();
  }
  unstack_add(d_pre.transpose() * t.input, d_pre.transpose() * shifted_down(t.h),
              d_pre.colwise().sum().transpose(),
              {&grad.forget, &grad.input, &grad.output, &grad.candidate});
  return d_pre * s.input;
}

Matrix gru_backward(const GruParams& p, const GruTape& t, const Matrix& dy, GruParams& grad) {
  const Eigen::Index steps = dy.rows(), j = p.units();
  const Stacked s = stack({&p.update, &p.reset});
  const Matrix h_prev_all = shifted_down(t.h);
  Matrix d_gates(steps, 2 * j), d_cand(steps, j), reset_h(steps, j);
  Vector dh_next = Vector::Zero(j);
  for (Eigen::Index step = steps - 1; step >= 0; --step) {
    const Vector z = t.update.row(step).transpose();
    const Vector r = t.reset.row(step).transpose();
    const Vector g = t.cand.row(step).transpose();
    const Vector h_prev = h_prev_all.row(step).transpose();
    reset_h.row(step) = r.cwiseProduct(h_prev).transpose();

    const Vector dh = dy.row(step).transpose() + dh_next;
    const Vector da_h = (dh.cwiseProduct(z).array() * (1.0 - g.array().square())).matrix();
    const Vector d_rh = p.candidate.recurrent.transpose() * da_h;
    const Vector da_z = (dh.cwiseProduct(g - h_prev).array() * z.array() * (1.0 - z.array())).matrix();
    const Vector da_r = (d_rh.cwiseProduct(h_prev).array() * r.array() * (1.0 - r.array())).matrix();
    d_cand.row(step) = da_h.transpose();
    d_gates.block(step, 0, 1, j) = da_z.transpose();
    d_gates.block(step, j, 1, j) = da_r.transpose();
    dh_next = dh.cwiseProduct(Vector::Ones(j) - z) + d_rh.cwiseProduct(r) +
              s.recurrent.transpose() * d_gates.row(step).transpose();
  }
  unstack_add(d_gates.transpose() * t.input, d_gates.transpose() * h_prev_all,
              d_gates.colwise().sum().transpose(), {&grad.update, &grad.reset});
  grad.candidate.input += d_cand.transpose() * t.input;
  grad.candidate.recurrent += d_cand.transpose() * reset_h;
  grad.candidate.bias += d_cand.colwise().sum().transpose();
  return d_gates * s.input + d_cand * p.candidate.input;
}

struct TapedForward {
  ForwardResult result;
  std::vector<Tape> tapes;
};

TapedForward run_forward(const Network& net, const Matrix& inputs, const GateSet& capture,
                         bool train_mode, Rng* rng, bool keep_tapes) {
  if (inputs.cols() != net.input_dim) throw DataError("input feature dimension does not match network");
  if (train_mode && net.dropout_rate > 0.0 && !rng) throw ConfigError("train mode requires an rng");
  for (GateTag g : capture) {
    for (const Layer& layer : net.layers) {
      const bool lstm = std::holds_alternative<LstmLayer>(layer);
      const bool gru = std::holds_alternative<GruLayer>(layer);
      if ((lstm && cell_of(g) != CellType::lstm) || (gru && cell_of(g) != CellType::gru))
        throw ConfigError("gate not available: " + std::string(to_string(g)) + " on a " +
                          (lstm ? "LSTM" : "GRU") + " network");
    }
  }

  TapedForward out;
  Matrix x = inputs;
  int recurrent_index = 0;
  LstmTape lstm_scratch;
  GruTape gru_scratch;
  for (const Layer& layer : net.layers) {
    if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      DenseTape tape;
      x = dense_forward(*dense, x, net.dropout_rate, train_mode, rng, keep_tapes ? &tape : nullptr);
      if (keep_tapes) out.tapes.emplace_back(std::move(tape));
    } else if (const auto* lstm = std::get_if<LstmLayer>(&layer)) {
      LstmTape tape;
      x = lstm_forward(lstm->params, x, keep_tapes ? &tape : nullptr, lstm_scratch);
      const LstmTape& t = keep_tapes ? tape : lstm_scratch;
      for (GateTag g : capture) {
        const Matrix& v = g == GateTag::lstm_forget ? t.forget : g == GateTag::lstm_input ? t.in : t.out;
        out.result.traces.push_back({g, recurrent_index, v});
      }
      if (keep_tapes) out.tapes.emplace_back(std::move(tape));
      ++recurrent_index;
    } else {
      const auto& gru = std::get<GruLayer>(layer);
      GruTape tape;
      x = gru_forward(gru.params, x, keep_tapes ? &tape : nullptr, gru_scratch);
      const GruTape& t = keep_tapes ? tape : gru_scratch;
      for (GateTag g : capture)
        out.result.traces.push_back({g, recurrent_index, g == GateTag::gru_update ? t.update : t.reset});
      if (keep_tapes) out.tapes.emplace_back(std::move(tape));
      ++recurrent_index;
    }
  }
  out.result.outputs = std::move(x);
  return out;
}

Matrix loss_gradient(const Matrix& outputs, const Matrix& inputs, LossKind kind) {
  const double scale = 2.0 / static_cast<double>(inputs.cols());
  if (kind == LossKind::reconstruction) return scale * (outputs - inputs);
  Matrix d = Matrix::Zero(outputs.rows(), outputs.cols());
  const Eigen::Index n = inputs.rows() - 1;
  d.topRows(n) = scale * (outputs.topRows(n) - inputs.bottomRows(n));
  return d;
}

}  // namespace

CellType cell_of(GateTag gate) {
  return gate == GateTag::gru_update || gate == GateTag::gru_reset ? CellType::gru : CellType::lstm;
}

std::string_view to_string(GateTag gate) {
  switch (gate) {
    case GateTag::lstm_forget: return "lstm_forget";
    case GateTag::lstm_input: return "lstm_input";
    case GateTag::lstm_output: return "lstm_output";
    case GateTag::gru_update: return "gru_update";
    case GateTag::gru_reset: return "gru_reset";
  }
  return "?";
}

std::string_view to_string(CellType cell) { return cell == CellType::lstm ? "lstm" : "gru"; }

GateTag parse_gate_tag(std::string_view name) {
  if (name == "lstm_forget" || name == "forget") return GateTag::lstm_forget;
  if (name == "lstm_input" || name == "input") return GateTag::lstm_input;
  if (name == "lstm_output" || name == "output") return GateTag::lstm_output;
  if (name == "gru_update" || name == "update") return GateTag::gru_update;
  if (name == "gru_reset" || name == "reset") return GateTag::gru_reset;
  throw ConfigError("unknown gate: " + std::string(name));
}

CellType parse_cell_type(std::string_view name) {
  if (name == "lstm") return CellType::lstm;
  if (name == "gru") return CellType::gru;
  throw ConfigError("unknown cell type: " + std::string(name));
}

GateWeights GateWeights::zeros(Eigen::Index units, Eigen::Index input_dim) {
  return {Matrix::Zero(units, input_dim), Matrix::Zero(units, units), Vector::Zero(units)};
}

LstmParams LstmParams::zeros(Eigen::Index units, Eigen::Index input_dim) {
  const auto g = GateWeights::zeros(units, input_dim);
  return {g, g, g, g};
}

GruParams GruParams::zeros(Eigen::Index units, Eigen::Index input_dim) {
  const auto g = GateWeights::zeros(units, input_dim);
  return {g, g, g};
}

LstmStep lstm_step(const LstmParams& p, const Vector& x, const Vector& h_prev, const Vector& c_prev) {
  const Eigen::Index j = p.units();
  for (const GateWeights* g : {&p.forget, &p.input, &p.output, &p.candidate}) check_gate(*g, j, p.input_dim());
  check_step(j, p.input_dim(), x, h_prev);
  if (c_prev.size() != j) throw DataError("previous cell state has wrong dimension");

  LstmStep s;
  s.forget = sigmoid(affine(p.forget, x, h_prev));
  s.input = sigmoid(affine(p.input, x, h_prev));
  s.output = sigmoid(affine(p.output, x, h_prev));
  const Vector cand = affine(p.candidate, x, h_prev).array().tanh().matrix();
  s.c = s.forget.cwiseProduct(c_prev) + s.input.cwiseProduct(cand);
  s.h = s.output.cwiseProduct(s.c.array().tanh().matrix());
  return s;
}

GruStep gru_step(const GruParams& p, const Vector& x, const Vector& h_prev) {
  const Eigen::Index j = p.units();
  for (const GateWeights* g : {&p.update, &p.reset, &p.candidate}) check_gate(*g, j, p.input_dim());
  check_step(j, p.input_dim(), x, h_prev);

  GruStep s;
  s.update = sigmoid(affine(p.update, x, h_prev));
  s.reset = sigmoid(affine(p.reset, x, h_prev));
  const Vector cand = (p.candidate.input * x + p.candidate.recurrent * s.reset.cwiseProduct(h_prev) +
                       p.candidate.bias)
                          .array()
                          .tanh()
                          .matrix();
  s.h = (Vector::Ones(j) - s.update).cwiseProduct(h_prev) + s.update.cwiseProduct(cand);
  return s;
}

Eigen::Index Network::output_dim() const {
  Eigen::Index dim = input_dim;
  for (const Layer& layer : layers) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, DenseLayer>)
            dim = l.weights.rows();
          else
            dim = l.params.units();
        },
        layer);
  }
  return dim;
}

int Network::recurrent_layer_count() const {
  int n = 0;
  for (const Layer& layer : layers) n += std::holds_alternative<DenseLayer>(layer) ? 0 : 1;
  return n;
}

void validate(const Network& net) {
  Eigen::Index dim = net.input_dim;
  if (dim <= 0) throw ConfigError("network input dimension must be positive");
  if (!(net.dropout_rate >= 0.0 && net.dropout_rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const std::string where = "layer " + std::to_string(k);
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, DenseLayer>) {
            if (l.weights.cols() != dim || l.bias.size() != l.weights.rows())
              throw ConfigError(where + ": dense layer dimensions do not chain");
            dim = l.weights.rows();
          } else {
            const Eigen::Index j = l.params.units();
            try {
              if constexpr (std::is_same_v<L, LstmLayer>) {
                for (const GateWeights* g : {&l.params.forget, &l.params.input, &l.params.output, &l.params.candidate})
                  check_gate(*g, j, dim);
              } else {
                for (const GateWeights* g : {&l.params.update, &l.params.reset, &l.params.candidate})
                  check_gate(*g, j, dim);
              }
            } catch (const DataError&) {
              throw ConfigError(where + ": recurrent layer dimensions do not chain");
            }
            dim = j;
          }
        },
        net.layers[k]);
  }
}

Network zeros_like(const Network& net) {
  Network z = net;
  for_each_parameter(z, [](const std::string&, auto& t) { t.setZero(); });
  return z;
}

Eigen::Index parameter_count(const Network& net) {
  Eigen::Index n = 0;
  for_each_parameter(net, [&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

Vector flatten_parameters(const Network& net) {
  Vector flat(parameter_count(net));
  Eigen::Index pos = 0;
  for_each_parameter(net, [&](const std::string&, const auto& t) {
    flat.segment(pos, t.size()) = Eigen::Map<const Vector>(t.data(), t.size());
    pos += t.size();
  });
  return flat;
}

void assign_parameters(Network& net, const Vector& flat) {
  if (flat.size() != parameter_count(net)) throw DataError("parameter vector has wrong length");
  Eigen::Index pos = 0;
  for_each_parameter(net, [&](const std::string&, auto& t) {
    Eigen::Map<Vector>(t.data(), t.size()) = flat.segment(pos, t.size());
    pos += t.size();
  });
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  const double keep = 1.0 - rate;
  Matrix mask(rows, cols);
  if (rate == 0.0) return mask.setOnes();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = u(rng) < keep ? 1.0 / keep : 0.0;
  return mask;
}

ForwardResult forward_sequence(const Network& net, const Matrix& inputs, const GateSet& capture,
                               bool train_mode, Rng* rng) {
  return run_forward(net, inputs, capture, train_mode, rng, false).result;
}

double sequence_loss(const Matrix& outputs, const Matrix& inputs, LossKind kind) {
  if (outputs.rows() != inputs.rows() || outputs.cols() != inputs.cols())
    throw DataError("output and target shapes differ");
  const double d = static_cast<double>(inputs.cols());
  if (kind == LossKind::reconstruction) return (outputs - inputs).squaredNorm() / d;
  if (inputs.rows() < 2) throw DataError("prediction loss needs at least two frames");
  const Eigen::Index n = inputs.rows() - 1;
  return (outputs.topRows(n) - inputs.bottomRows(n)).squaredNorm() / d;
}

Gradients bptt_gradients(const Network& net, std::span<const SequenceView> batch, LossKind kind,
                         Rng* dropout_rng) {
  if (batch.empty()) throw DataError("empty batch");
  Network grad = zeros_like(net);
  Gradients out;
  for (const SequenceView& seq : batch) {
    const Matrix& x = *seq.frames;
    TapedForward fwd;
    try {
      fwd = run_forward(net, x, {}, dropout_rng != nullptr, dropout_rng, true);
    } catch (const NumericalError& ex) {
      throw NumericalError("utterance " + std::string(seq.id) + ": " + ex.what());
    }
    const double loss = sequence_loss(fwd.result.outputs, x, kind);
    if (!std::isfinite(loss)) throw NumericalError("non-finite loss on utterance " + std::string(seq.id));
    out.loss += loss;
    out.frames += kind == LossKind::reconstruction ? x.rows() : x.rows() - 1;

    Matrix d = loss_gradient(fwd.result.outputs, x, kind);
    for (std::size_t k = net.layers.size(); k-- > 0;) {
      const Layer& layer = net.layers[k];
      Layer& g = grad.layers[k];
      if (const auto* dense = std::get_if<DenseLayer>(&layer))
        d = dense_backward(*dense, std::get<DenseTape>(fwd.tapes[k]), d, std::get<DenseLayer>(g));
      else if (const auto* lstm = std::get_if<LstmLayer>(&layer))
        d = lstm_backward(lstm->params, std::get<LstmTape>(fwd.tapes[k]), d, std::get<LstmLayer>(g).params);
      else
        d = gru_backward(std::get<GruLayer>(layer).params, std::get<GruTape>(fwd.tapes[k]), d,
                         std::get<GruLayer>(g).params);
    }
  }
  out.values = flatten_parameters(grad);
  return out;
}

}  // namespace gasseg
