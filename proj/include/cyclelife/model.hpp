#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cyclelife/autodiff.hpp"

namespace cyclelife::nn {

struct Conv1DSpec {
  int filters = 0;
  int kernel = 0;
  int stride = 1;
};
struct LstmSpec {
  int hidden = 0;
};
struct AttentionSpec {
  int hidden = 0;
};
struct DenseSpec {
  int out = 0;
};
struct DropoutSpec {
  double p = 0.0;
};
struct LeakyReluSpec {
  double negative_slope = 0.01;
};
struct SigmoidSpec {};

using LayerSpec = std::variant<Conv1DSpec, LstmSpec, AttentionSpec, DenseSpec, DropoutSpec,
                               LeakyReluSpec, SigmoidSpec>;

// Declarative layer stack: an optional Conv1D front end, one LSTM,
// an optional Attention readout directly after it, then a dense head.
struct ModelSpec {
  int seq_len = 0;
  int n_features = 0;
  std::vector<LayerSpec> layers;

  // Checks the topology rules and that shapes chain; throws on violation.
  void validate() const;

  // Sequence length entering the LSTM (after the conv stage, if any).
  int lstm_steps() const;
};

struct Model {
  ModelSpec spec;
  std::map<std::string, ad::Tensor> params;  // ordered: deterministic iteration
  std::uint64_t rng_seed = 0;

  std::size_t parameter_count() const;
};

// Fresh parameters for `spec`: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)],
// zero biases except the LSTM forget gate bias, which starts at 1.
Model build_model(ModelSpec spec, std::uint64_t seed);

// The two concrete architectures. Classification: LSTM(16) with optional
// attention, two LeakyReLU/dropout(0.3) dense blocks of 16, sigmoid scalar
// head over the first 5 cycles. Prediction: Conv1D(15 filters, kernel 4,
// stride 4) then LSTM(32), two LeakyReLU/dropout(0.2) dense blocks of 64
// and a linear scalar head over the first 100 cycles.
Model build_classifier(int n_features = 15, bool with_attention = false, std::uint64_t seed = 0);
Model build_predictor(int n_features = 15, std::uint64_t seed = 0);

// Read-only view of one LSTM cell's parameters.
struct LstmParamRefs {
  const ad::Tensor &w_ii, &w_if, &w_ig, &w_io;  // input -> gate, {H, F}
  const ad::Tensor &w_hi, &w_hf, &w_hg, &w_ho;  // hidden -> gate, {H, H}
  const ad::Tensor &b_i, &b_f, &b_g, &b_o;      // {H, 1}
};

// One step of the standard LSTM cell. x is {F,1}, h and c are {H,1};
// returns (h_next, c_next).
std::pair<ad::Tensor, ad::Tensor> lstm_step(ad::Tape& tape, const ad::Tensor& x,
                                            const ad::Tensor& h, const ad::Tensor& c,
                                            const LstmParamRefs& p);

struct LstmTrace {
  std::vector<ad::Tensor> hidden;  // one {H,1} column per step
  ad::Tensor h, c;                 // final states
};

// Unrolls the cell over the rows of seq ({T,F}); errors on T == 0.
LstmTrace run_lstm(ad::Tape& tape, const ad::Tensor& seq, const LstmParamRefs& p,
                   const ad::Tensor& h0, const ad::Tensor& c0);

// Scaled dot-product readout over the per-step hidden states with `query`
// (the final hidden state) as the single query vector. The context and the
// query are concatenated and projected back to H by w_proj/b_proj.
ad::Tensor attention(ad::Tape& tape, const ad::Tensor& all_hidden, const ad::Tensor& query,
                     const ad::Tensor& w_proj, const ad::Tensor& b_proj);

// Softmax weights used by the attention readout (exposed for tests).
ad::Tensor attention_weights(ad::Tape& tape, const ad::Tensor& all_hidden,
                             const ad::Tensor& query);

// Scalar prediction for one sequence ({T,F}). Registers the model's
// parameters on the tape, so gradients are available after backward.
ad::Tensor forward_one(ad::Tape& tape, Model& model, const ad::Tensor& seq, bool training,
                       Rng& rng);

// Batched forward over row-major data [batch][seq_len][n_features];
// returns the {B} tensor of per-sequence predictions.
ad::Tensor forward_batch(ad::Tape& tape, Model& model, std::span<const double> data,
                         std::size_t batch, bool training, Rng& rng);

}  // namespace cyclelife::nn
