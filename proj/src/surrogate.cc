// Copyright 2026 The Melgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "melgen/surrogate.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "melgen/errors.h"

namespace melgen {

namespace {

constexpr char kModelMagic[] = "melgen-surrogate";
constexpr int kModelVersion = 1;
constexpr double kScoreScale = 100.0;
constexpr std::size_t kGradientBlock = 32;

inline double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Views of one cell's parameters.
struct CellParams {
  const double* weights;  // 4H x (V + H)
  const double* bias;     // 4H
  int vocab;
  int hidden;
  int stride() const { return vocab + hidden; }
};

struct CellGrads {
  double* weights;
  double* bias;
};

// Activations of one cell over a sequence, step-major.
struct Tape {
  std::vector<double> gates;   // T x 4H, post-activation
  std::vector<double> cell;    // T x H
  std::vector<double> tanh_c;  // T x H
  std::vector<double> hidden;  // T x H

  void Resize(std::size_t steps, int h) {
    gates.resize(steps * 4 * h);
    cell.resize(steps * h);
    tanh_c.resize(steps * h);
    hidden.resize(steps * h);
  }
};

// Runs the cell over `inputs`; `inputs[k]` is read at step k. Writes the
// final hidden state to `h_out`. Records activations when `tape` is set.
void RunCell(const CellParams& p, std::span<const int> inputs, Tape* tape,
             double* h_out) {
  const int h_size = p.hidden;
  const int rows = 4 * h_size;
  const int stride = p.stride();
  std::vector<double> h(h_size, 0.0), c(h_size, 0.0), pre(rows);
  if (tape != nullptr) tape->Resize(inputs.size(), h_size);

  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const int token = inputs[t];
    for (int r = 0; r < rows; ++r) {
      const double* row = p.weights + static_cast<std::size_t>(r) * stride;
      const double* rec = row + p.vocab;
      double acc = p.bias[r] + row[token];
      for (int k = 0; k < h_size; ++k) acc += rec[k] * h[k];
      pre[r] = acc;
    }
    for (int k = 0; k < h_size; ++k) {
      const double ig = Sigmoid(pre[kInputGate * h_size + k]);
      const double fg = Sigmoid(pre[kForgetGate * h_size + k]);
      const double og = Sigmoid(pre[kOutputGate * h_size + k]);
      const double cand = std::tanh(pre[kCandidate * h_size + k]);
      c[k] = fg * c[k] + ig * cand;
      const double tc = std::tanh(c[k]);
      h[k] = og * tc;
      if (tape != nullptr) {
        double* g = tape->gates.data() + t * rows;
        g[kInputGate * h_size + k] = ig;
        g[kForgetGate * h_size + k] = fg;
        g[kOutputGate * h_size + k] = og;
        g[kCandidate * h_size + k] = cand;
        tape->cell[t * h_size + k] = c[k];
        tape->tanh_c[t * h_size + k] = tc;
        tape->hidden[t * h_size + k] = h[k];
      }
    }
  }
  std::copy(h.begin(), h.end(), h_out);
}

// Backpropagation through time for one cell, given the gradient of the loss
// with respect to the final hidden state. Accumulates into `grads`.
void BackwardCell(const CellParams& p, std::span<const int> inputs,
                  const Tape& tape, std::span<const double> dh_final,
                  const CellGrads& grads) {
  const int h_size = p.hidden;
  const int rows = 4 * h_size;
  const int stride = p.stride();
  std::vector<double> dh(dh_final.begin(), dh_final.end());
  std::vector<double> dc(h_size, 0.0), da(rows), dh_prev(h_size);

  for (std::size_t step = inputs.size(); step-- > 0;) {
    const double* g = tape.gates.data() + step * rows;
    const double* tc = tape.tanh_c.data() + step * h_size;
    const double* c_prev =
        step > 0 ? tape.cell.data() + (step - 1) * h_size : nullptr;
    const double* h_prev =
        step > 0 ? tape.hidden.data() + (step - 1) * h_size : nullptr;

    for (int k = 0; k < h_size; ++k) {
      const double ig = g[kInputGate * h_size + k];
      const double fg = g[kForgetGate * h_size + k];
      const double og = g[kOutputGate * h_size + k];
      const double cand = g[kCandidate * h_size + k];
      da[kOutputGate * h_size + k] = dh[k] * tc[k] * og * (1.0 - og);
      const double dck = dc[k] + dh[k] * og * (1.0 - tc[k] * tc[k]);
      da[kInputGate * h_size + k] = dck * cand * ig * (1.0 - ig);
      da[kCandidate * h_size + k] = dck * ig * (1.0 - cand * cand);
      const double cp = c_prev != nullptr ? c_prev[k] : 0.0;
      da[kForgetGate * h_size + k] = dck * cp * fg * (1.0 - fg);
      dc[k] = dck * fg;
    }

    const int token = inputs[step];
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    for (int r = 0; r < rows; ++r) {
      const double d = da[r];
      double* grow = grads.weights + static_cast<std::size_t>(r) * stride;
      grow[token] += d;
      grads.bias[r] += d;
      if (h_prev == nullptr) continue;
      double* grec = grow + p.vocab;
      const double* rec = p.weights + static_cast<std::size_t>(r) * stride + p.vocab;
      for (int k = 0; k < h_size; ++k) {
        grec[k] += d * h_prev[k];
        dh_prev[k] += rec[k] * d;
      }
    }
    dh.swap(dh_prev);
  }
}

CellParams Cell(const SurrogateModel& model, Direction d) {
  return {model.cell_weights(d).data(), model.cell_bias(d).data(),
          model.vocab_size(), model.hidden_size()};
}

double OutputLogit(const SurrogateModel& model, std::span<const double> hf,
                   std::span<const double> hb) {
  const auto w = model.output_weights();
  const std::size_t h = hf.size();
  double z = model.output_bias();
  for (std::size_t k = 0; k < h; ++k) z += w[k] * hf[k];
  for (std::size_t k = 0; k < h; ++k) z += w[h + k] * hb[k];
  return z;
}

// Per-thread scratch for one example's forward and backward pass.
struct Workspace {
  std::vector<int> inputs;
  std::vector<int> reversed;
  Tape forward_tape;
  Tape backward_tape;
  std::vector<double> hf;
  std::vector<double> hb;
  std::vector<double> dh;
};

// Adds the example's contribution to loss (returned, normalized scale,
// already divided by `batch_size`) and to `grad`.
double AccumulateExample(const SurrogateModel& model,
                         const TrainingExample& example, double batch_size,
                         Workspace& ws, std::span<double> grad) {
  const int h = model.hidden_size();
  ws.inputs = model.Encode(example.melody);
  ws.reversed.assign(ws.inputs.rbegin(), ws.inputs.rend());
  ws.hf.resize(h);
  ws.hb.resize(h);
  ws.dh.resize(h);

  const CellParams fwd = Cell(model, Direction::kForward);
  const CellParams bwd = Cell(model, Direction::kBackward);
  RunCell(fwd, ws.inputs, &ws.forward_tape, ws.hf.data());
  RunCell(bwd, ws.reversed, &ws.backward_tape, ws.hb.data());

  const double y = Sigmoid(OutputLogit(model, ws.hf, ws.hb));
  const double residual = (kScoreScale * y - example.target) / kScoreScale;
  const double loss = residual * residual / batch_size;
  const double dz = 2.0 * residual / batch_size * y * (1.0 - y);

  // Output layer sits at the end of the flat gradient.
  const std::size_t out_offset = grad.size() - 1 - 2 * static_cast<std::size_t>(h);
  for (int k = 0; k < h; ++k) {
    grad[out_offset + k] += dz * ws.hf[k];
    grad[out_offset + h + k] += dz * ws.hb[k];
  }
  grad.back() += dz;

  const auto w = model.output_weights();
  const std::size_t cell = (grad.size() - 1 - 2 * static_cast<std::size_t>(h)) / 2;
  const std::size_t weights = cell - 4 * static_cast<std::size_t>(h);
  for (int k = 0; k < h; ++k) ws.dh[k] = dz * w[k];
  BackwardCell(fwd, ws.inputs, ws.forward_tape, ws.dh,
               {grad.data(), grad.data() + weights});
  for (int k = 0; k < h; ++k) ws.dh[k] = dz * w[h + k];
  BackwardCell(bwd, ws.reversed, ws.backward_tape, ws.dh,
               {grad.data() + cell, grad.data() + cell + weights});
  return loss;
}

void CheckBatch(std::span<const TrainingExample> batch) {
  if (batch.empty()) throw InsufficientScores("training batch is empty");
  for (const auto& ex : batch) {
    if (!(ex.target >= kMinScore && ex.target <= kMaxScore)) {
      throw ScoreOutOfRange("training target " + FormatDouble(ex.target) +
                            " is outside [0, 100]");
    }
  }
}

bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate >= 0.0 && std::isfinite(learning_rate))) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must lie in [0, 1)");
  }
}

SurrogateModel::SurrogateModel(std::vector<Token> alphabet, int hidden_size)
    : alphabet_(std::move(alphabet)),
      index_by_code_(kTokenCodeSpace, -1),
      hidden_(hidden_size) {
  if (alphabet_.empty()) throw ConfigError("model alphabet is empty");
  if (hidden_ < 1) throw ConfigError("hidden size must be positive");
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    if (!IsValid(alphabet_[i])) throw ConfigError("invalid token in alphabet");
    int& slot = index_by_code_[TokenCode(alphabet_[i])];
    if (slot >= 0) throw ConfigError("duplicate token " + ToAbc(alphabet_[i]));
    slot = static_cast<int>(i);
  }
  params_.assign(2 * cell_size() + 2 * static_cast<std::size_t>(hidden_) + 1,
                 0.0);
}

std::size_t SurrogateModel::cell_size() const {
  const std::size_t rows = 4 * static_cast<std::size_t>(hidden_);
  return rows * (alphabet_.size() + hidden_) + rows;
}

void SurrogateModel::InitializeRandom(std::uint64_t seed, double init_range,
                                      double forget_bias) {
  Rng rng(seed);
  for (double& p : params_) p = (2.0 * Uniform01(rng) - 1.0) * init_range;
  for (Direction d : {Direction::kForward, Direction::kBackward}) {
    auto bias = cell_bias(d);
    std::fill(bias.begin() + kForgetGate * hidden_,
              bias.begin() + (kForgetGate + 1) * hidden_, forget_bias);
  }
}

std::span<double> SurrogateModel::cell_weights(Direction d) {
  const std::size_t offset = d == Direction::kForward ? 0 : cell_size();
  return std::span<double>(params_).subspan(
      offset, cell_size() - 4 * static_cast<std::size_t>(hidden_));
}

std::span<const double> SurrogateModel::cell_weights(Direction d) const {
  return const_cast<SurrogateModel*>(this)->cell_weights(d);
}

std::span<double> SurrogateModel::cell_bias(Direction d) {
  const std::size_t rows = 4 * static_cast<std::size_t>(hidden_);
  const std::size_t offset =
      (d == Direction::kForward ? 0 : cell_size()) + cell_size() - rows;
  return std::span<double>(params_).subspan(offset, rows);
}

std::span<const double> SurrogateModel::cell_bias(Direction d) const {
  return const_cast<SurrogateModel*>(this)->cell_bias(d);
}

std::span<double> SurrogateModel::output_weights() {
  return std::span<double>(params_).subspan(2 * cell_size(),
                                            2 * static_cast<std::size_t>(hidden_));
}

std::span<const double> SurrogateModel::output_weights() const {
  return const_cast<SurrogateModel*>(this)->output_weights();
}

int SurrogateModel::TokenIndex(const Token& token) const {
  const int index = IsValid(token) ? index_by_code_[TokenCode(token)] : -1;
  if (index < 0) {
    throw UnknownToken("token '" + ToAbc(token) + "' is not in the model alphabet");
  }
  return index;
}

std::vector<int> SurrogateModel::Encode(const Melody& melody) const {
  std::vector<int> out;
  out.reserve(melody.size());
  for (const Token& t : melody.tokens) out.push_back(TokenIndex(t));
  return out;
}

void SurrogateModel::WriteTo(std::ostream& out) const {
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "hidden " << hidden_ << '\n';
  out << "alphabet " << alphabet_.size();
  for (const Token& t : alphabet_) out << ' ' << ToAbc(t);
  out << '\n';
  out << "parameters " << params_.size() << '\n';
  out << std::hexfloat;
  for (double p : params_) out << p << '\n';
  out << std::defaultfloat;
}

void SurrogateModel::Save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write model file " + path.string());
  WriteTo(out);
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

SurrogateModel SurrogateModel::ReadFrom(std::istream& in) {
  auto fail = [](const std::string& what) {
    return IoError("malformed model file: " + what);
  };
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != kModelMagic) throw fail("bad magic");
  if (version != kModelVersion) {
    throw fail("unsupported version " + std::to_string(version));
  }
  int hidden = 0;
  if (!(in >> word >> hidden) || word != "hidden") throw fail("missing hidden");
  std::size_t vocab = 0;
  if (!(in >> word >> vocab) || word != "alphabet") throw fail("missing alphabet");
  std::vector<Token> alphabet;
  for (std::size_t i = 0; i < vocab; ++i) {
    if (!(in >> word)) throw fail("truncated alphabet");
    std::vector<Token> parsed;
    try {
      parsed = Tokenize(word);
    } catch (const UnsupportedConstruct& e) {
      throw fail(e.what());
    }
    if (parsed.size() != 1) throw fail("bad alphabet entry '" + word + "'");
    alphabet.push_back(parsed.front());
  }
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "parameters") throw fail("missing parameters");

  SurrogateModel model(std::move(alphabet), hidden);
  if (count != model.params_.size()) throw fail("parameter count mismatch");
  for (double& p : model.params_) {
    if (!(in >> word)) throw fail("truncated parameters");
    char* end = nullptr;
    p = std::strtod(word.c_str(), &end);
    if (end != word.c_str() + word.size()) throw fail("bad number '" + word + "'");
  }
  return model;
}

SurrogateModel SurrogateModel::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read model file " + path.string());
  return ReadFrom(in);
}

std::vector<double> CellFinalState(const SurrogateModel& model, Direction cell,
                                   std::span<const int> inputs) {
  std::vector<double> h(model.hidden_size());
  RunCell(Cell(model, cell), inputs, nullptr, h.data());
  return h;
}

BidirectionalState FinalStates(const SurrogateModel& model,
                               const Melody& melody) {
  const std::vector<int> inputs = model.Encode(melody);
  const std::vector<int> reversed(inputs.rbegin(), inputs.rend());
  return {CellFinalState(model, Direction::kForward, inputs),
          CellFinalState(model, Direction::kBackward, reversed)};
}

double Predict(const SurrogateModel& model, const Melody& melody) {
  const BidirectionalState states = FinalStates(model, melody);
  return kScoreScale * Sigmoid(OutputLogit(model, states.forward, states.backward));
}

LossGradient LossAndGradientsSerial(const SurrogateModel& model,
                                    std::span<const TrainingExample> batch) {
  CheckBatch(batch);
  LossGradient result;
  result.gradient.assign(model.parameters().size(), 0.0);
  Workspace ws;
  const double n = static_cast<double>(batch.size());
  for (const TrainingExample& ex : batch) {
    result.loss += AccumulateExample(model, ex, n, ws, result.gradient);
  }
  result.mse = result.loss * kScoreScale * kScoreScale;
  return result;
}

LossGradient LossAndGradients(const SurrogateModel& model,
                              std::span<const TrainingExample> batch) {
  CheckBatch(batch);
  // Encode up front so an UnknownToken surfaces outside the parallel region.
  for (const auto& ex : batch) model.Encode(ex.melody);

  const std::size_t params = model.parameters().size();
  const std::size_t blocks = (batch.size() + kGradientBlock - 1) / kGradientBlock;
  std::vector<double> block_grads(blocks * params, 0.0);
  std::vector<double> block_loss(blocks, 0.0);
  const double n = static_cast<double>(batch.size());

#pragma omp parallel
  {
    Workspace ws;
#pragma omp for schedule(dynamic)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(blocks); ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * kGradientBlock;
      const std::size_t end = std::min(batch.size(), begin + kGradientBlock);
      std::span<double> grad(block_grads.data() + b * params, params);
      double loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        loss += AccumulateExample(model, batch[i], n, ws, grad);
      }
      block_loss[b] = loss;
    }
  }

  LossGradient result;
  result.gradient.assign(block_grads.begin(), block_grads.begin() + params);
  result.loss = block_loss[0];
  for (std::size_t b = 1; b < blocks; ++b) {
    const double* g = block_grads.data() + b * params;
    for (std::size_t j = 0; j < params; ++j) result.gradient[j] += g[j];
    result.loss += block_loss[b];
  }
  result.mse = result.loss * kScoreScale * kScoreScale;
  return result;
}

double MeanSquaredError(const SurrogateModel& model,
                        std::span<const TrainingExample> batch) {
  CheckBatch(batch);
  double total = 0.0;
  for (const auto& ex : batch) {
    const double r = Predict(model, ex.melody) - ex.target;
    total += r * r;
  }
  return total / static_cast<double>(batch.size());
}

TrainResult Train(SurrogateModel model, std::span<const TrainingExample> data,
                  const TrainConfig& config) {
  config.Validate();
  CheckBatch(data);

  std::vector<TrainingExample> train(data.begin(), data.end());
  std::vector<TrainingExample> holdout;
  if (config.holdout_fraction > 0.0 && data.size() > 1) {
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    const auto held = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.holdout_fraction * data.size()));
    train.clear();
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < held ? holdout : train).push_back(data[order[i]]);
    }
  }

  TrainResult result{std::move(model), {}, 0.0, std::nullopt};
  result.loss_trace.reserve(config.epochs);
  auto params = result.model.parameters();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    LossGradient lg = LossAndGradients(result.model, train);
    if (!std::isfinite(lg.mse) || !AllFinite(lg.gradient)) {
      throw DivergenceDetected("loss became non-finite at epoch " +
                               std::to_string(epoch) +
                               "; lower the learning rate");
    }
    result.loss_trace.push_back(lg.mse);
    const double norm = std::sqrt(std::inner_product(
        lg.gradient.begin(), lg.gradient.end(), lg.gradient.begin(), 0.0));
    const double scale =
        config.learning_rate * (norm > config.clip_norm ? config.clip_norm / norm : 1.0);
    for (std::size_t j = 0; j < params.size(); ++j) {
      params[j] -= scale * lg.gradient[j];
    }
    if (!AllFinite(params)) {
      throw DivergenceDetected("parameters became non-finite at epoch " +
                               std::to_string(epoch));
    }
  }
  result.final_mse = MeanSquaredError(result.model, train);
  if (!holdout.empty()) result.holdout_mse = MeanSquaredError(result.model, holdout);
  return result;
}

FitnessFn AsFitness(std::shared_ptr<const SurrogateModel> model) {
  return [model = std::move(model)](const Melody& melody) {
    return Predict(*model, melody);
  };
}

}  // namespace melgen
