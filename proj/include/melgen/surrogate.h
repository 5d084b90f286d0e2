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

// Bidirectional LSTM regressor from a melody to a score in (0, 100).
//
// Tokens are one-hot encoded over the model alphabet (size V). Each
// direction runs a standard LSTM cell with hidden size H:
//
//   i = sigmoid(Wi [x; h] + bi)      f = sigmoid(Wf [x; h] + bf)
//   o = sigmoid(Wo [x; h] + bo)      g = tanh(Wg [x; h] + bg)
//   c' = f * c + i * g               h' = o * tanh(c')
//
// starting from h = c = 0. The forward cell reads the melody left to right,
// the backward cell right to left. Their final hidden states are
// concatenated and mapped to 100 * sigmoid(w . [hf; hb] + b).
//
// Training minimizes the mean squared error on targets divided by 100 using
// full-batch gradient descent with global-norm gradient clipping.

#ifndef MELGEN_SURROGATE_H_
#define MELGEN_SURROGATE_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "melgen/abc.h"
#include "melgen/ga_engine.h"
#include "melgen/score_store.h"

namespace melgen {

enum class Direction { kForward, kBackward };

// Row order of the stacked gate matrices.
enum Gate { kInputGate = 0, kForgetGate = 1, kOutputGate = 2, kCandidate = 3 };

struct TrainConfig {
  int epochs = 5000;
  double learning_rate = 0.05;
  double clip_norm = 5.0;
  double init_range = 0.08;
  double forget_bias = 1.0;
  std::uint64_t seed = 1;
  // Fraction of examples held out of training, 0 disables.
  double holdout_fraction = 0.0;

  // Throws ConfigError.
  void Validate() const;
};

class SurrogateModel {
 public:
  // All parameters zero. Throws ConfigError on an empty alphabet or H < 1.
  SurrogateModel(std::vector<Token> alphabet, int hidden_size);

  // Uniform in [-init_range, init_range], forget-gate biases set to
  // forget_bias.
  void InitializeRandom(std::uint64_t seed, double init_range = 0.08,
                        double forget_bias = 1.0);

  int vocab_size() const { return static_cast<int>(alphabet_.size()); }
  int hidden_size() const { return hidden_; }
  const std::vector<Token>& alphabet() const { return alphabet_; }

  // Flat layout: forward weights, forward bias, backward weights, backward
  // bias, output weights, output bias. Cell weights are 4H rows (gate order
  // above) of V input columns followed by H recurrent columns.
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  std::span<double> cell_weights(Direction d);
  std::span<const double> cell_weights(Direction d) const;
  std::span<double> cell_bias(Direction d);
  std::span<const double> cell_bias(Direction d) const;
  // Forward half first.
  std::span<double> output_weights();
  std::span<const double> output_weights() const;
  double& output_bias() { return params_.back(); }
  double output_bias() const { return params_.back(); }

  // Throws UnknownToken.
  int TokenIndex(const Token& token) const;
  std::vector<int> Encode(const Melody& melody) const;

  // Versioned text format; parameters are hex floats so load(save(m))
  // reproduces predictions bit for bit.
  void Save(const std::filesystem::path& path) const;
  void WriteTo(std::ostream& out) const;
  static SurrogateModel Load(const std::filesystem::path& path);
  static SurrogateModel ReadFrom(std::istream& in);

  friend bool operator==(const SurrogateModel& a, const SurrogateModel& b) {
    return a.alphabet_ == b.alphabet_ && a.hidden_ == b.hidden_ &&
           a.params_ == b.params_;
  }

 private:
  std::size_t cell_size() const;

  std::vector<Token> alphabet_;
  std::vector<int> index_by_code_;
  int hidden_ = 0;
  std::vector<double> params_;
};

// Final hidden state of one cell fed `inputs` (alphabet indices) in order.
std::vector<double> CellFinalState(const SurrogateModel& model, Direction cell,
                                   std::span<const int> inputs);

struct BidirectionalState {
  std::vector<double> forward;
  std::vector<double> backward;
};
BidirectionalState FinalStates(const SurrogateModel& model,
                               const Melody& melody);

// Throws UnknownToken.
double Predict(const SurrogateModel& model, const Melody& melody);

struct LossGradient {
  double mse = 0.0;   // score units squared
  double loss = 0.0;  // mse on the [0, 1] scale, i.e. mse / 100^2
  std::vector<double> gradient;  // d loss / d parameters
};

// OpenMP over fixed blocks of examples, reduced in block order, so the
// result does not depend on the thread count.
LossGradient LossAndGradients(const SurrogateModel& model,
                              std::span<const TrainingExample> batch);
// Single pass in example order. Kept as the reference for the above.
LossGradient LossAndGradientsSerial(const SurrogateModel& model,
                                    std::span<const TrainingExample> batch);

// Score units squared.
double MeanSquaredError(const SurrogateModel& model,
                        std::span<const TrainingExample> batch);

struct TrainResult {
  SurrogateModel model;
  std::vector<double> loss_trace;  // mse before each epoch's update
  double final_mse = 0.0;
  std::optional<double> holdout_mse;
};

// Throws ConfigError, InsufficientScores on empty data, or
// DivergenceDetected when the loss or parameters stop being finite.
TrainResult Train(SurrogateModel model, std::span<const TrainingExample> data,
                  const TrainConfig& config);

// Thread-safe wrapper around Predict.
FitnessFn AsFitness(std::shared_ptr<const SurrogateModel> model);

}  // namespace melgen

#endif  // MELGEN_SURROGATE_H_
