#include "cyclelife/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cyclelife::nn {

namespace {

template <typename T>
bool is(const LayerSpec& l) {
  return std::holds_alternative<T>(l);
}

}  // namespace

void ModelSpec::validate() const {
  if (seq_len < 1 || n_features < 1)
    throw std::invalid_argument("model spec: input shape must be positive");

  int conv_count = 0, lstm_count = 0;
  std::size_t lstm_pos = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (is<Conv1DSpec>(layers[i])) ++conv_count;
    if (is<LstmSpec>(layers[i])) {
      ++lstm_count;
      lstm_pos = i;
    }
  }
  if (lstm_count != 1) throw std::invalid_argument("model spec: exactly one LSTM stage required");
  if (conv_count > 1) throw std::invalid_argument("model spec: at most one Conv1D allowed");

  // Walk the stack and chain shapes: (len, width) until the LSTM collapses
  // the sequence, a plain width afterwards.
  int len = seq_len, width = n_features;
  bool collapsed = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (const auto* conv = std::get_if<Conv1DSpec>(&l)) {
      if (i >= lstm_pos) throw std::invalid_argument("model spec: Conv1D must precede the LSTM");
      if (conv->filters < 1 || conv->kernel < 1 || conv->stride < 1)
        throw std::invalid_argument("model spec: bad Conv1D dimensions");
      if (len < conv->kernel)
        throw std::invalid_argument("model spec: sequence shorter than Conv1D kernel");
      len = (len - conv->kernel) / conv->stride + 1;
      width = conv->filters;
    } else if (const auto* lstm = std::get_if<LstmSpec>(&l)) {
      if (lstm->hidden < 1) throw std::invalid_argument("model spec: LSTM hidden size must be positive");
      width = lstm->hidden;
      collapsed = true;
    } else if (const auto* attn = std::get_if<AttentionSpec>(&l)) {
      if (i == 0 || !is<LstmSpec>(layers[i - 1]))
        throw std::invalid_argument("model spec: Attention must directly follow the LSTM");
      if (attn->hidden != width)
        throw std::invalid_argument("model spec: Attention hidden size must match the LSTM");
    } else if (const auto* dense = std::get_if<DenseSpec>(&l)) {
      if (!collapsed) throw std::invalid_argument("model spec: Dense before the LSTM stage");
      if (dense->out < 1) throw std::invalid_argument("model spec: Dense width must be positive");
      width = dense->out;
    } else if (const auto* drop = std::get_if<DropoutSpec>(&l)) {
      if (drop->p < 0.0 || drop->p >= 1.0)
        throw std::invalid_argument("model spec: dropout probability must be in [0, 1)");
    }
  }
  if (!collapsed || width != 1)
    throw std::invalid_argument("model spec: stack must end in a scalar output");
}

int ModelSpec::lstm_steps() const {
  int len = seq_len;
  for (const auto& l : layers) {
    if (const auto* conv = std::get_if<Conv1DSpec>(&l))
      len = (len - conv->kernel) / conv->stride + 1;
    if (is<LstmSpec>(l)) break;
  }
  return len;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

namespace {

ad::Tensor init_uniform(ad::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(-bound, bound);
  t.requires_grad = true;
  return t;
}

ad::Tensor init_const(ad::Shape shape, double v) {
  ad::Tensor t = ad::Tensor::full(std::move(shape), v);
  t.requires_grad = true;
  return t;
}

}  // namespace

Model build_model(ModelSpec spec, std::uint64_t seed) {
  spec.validate();
  Model model;
  model.spec = std::move(spec);
  model.rng_seed = seed;
  Rng rng(seed);

  int width = model.spec.n_features;
  int dense_idx = 0;
  for (const auto& l : model.spec.layers) {
    if (const auto* conv = std::get_if<Conv1DSpec>(&l)) {
      const auto f = static_cast<std::size_t>(conv->filters);
      const auto k = static_cast<std::size_t>(conv->kernel);
      const auto c = static_cast<std::size_t>(width);
      model.params["conv.kernels"] = init_uniform({f, k, c}, k * c, rng);
      model.params["conv.bias"] = init_const({f}, 0.0);
      width = conv->filters;
    } else if (const auto* lstm = std::get_if<LstmSpec>(&l)) {
      const auto h = static_cast<std::size_t>(lstm->hidden);
      const auto f = static_cast<std::size_t>(width);
      for (const char* gate : {"i", "f", "g", "o"}) {
        model.params["lstm.w_i" + std::string(gate)] = init_uniform({h, f}, f, rng);
        model.params["lstm.w_h" + std::string(gate)] = init_uniform({h, h}, h, rng);
        // Forget gate bias starts open so early steps are remembered.
        model.params["lstm.b_" + std::string(gate)] =
            init_const({h, 1}, std::string(gate) == "f" ? 1.0 : 0.0);
      }
      width = lstm->hidden;
    } else if (const auto* attn = std::get_if<AttentionSpec>(&l)) {
      const auto h = static_cast<std::size_t>(attn->hidden);
      model.params["attn.w_proj"] = init_uniform({h, 2 * h}, 2 * h, rng);
      model.params["attn.b_proj"] = init_const({h, 1}, 0.0);
    } else if (const auto* dense = std::get_if<DenseSpec>(&l)) {
      const auto out = static_cast<std::size_t>(dense->out);
      const auto in = static_cast<std::size_t>(width);
      const std::string prefix = "dense" + std::to_string(dense_idx++);
      model.params[prefix + ".w"] = init_uniform({out, in}, in, rng);
      model.params[prefix + ".b"] = init_const({out, 1}, 0.0);
      width = dense->out;
    }
  }
  return model;
}

Model build_classifier(int n_features, bool with_attention, std::uint64_t seed) {
  ModelSpec spec;
  spec.seq_len = 5;
  spec.n_features = n_features;
  spec.layers.push_back(LstmSpec{16});
  if (with_attention) spec.layers.push_back(AttentionSpec{16});
  spec.layers.push_back(DenseSpec{16});
  spec.layers.push_back(LeakyReluSpec{});
  spec.layers.push_back(DropoutSpec{0.3});
  spec.layers.push_back(DenseSpec{16});
  spec.layers.push_back(LeakyReluSpec{});
  spec.layers.push_back(DropoutSpec{0.3});
  spec.layers.push_back(DenseSpec{1});
  spec.layers.push_back(SigmoidSpec{});
  return build_model(std::move(spec), seed);
}

Model build_predictor(int n_features, std::uint64_t seed) {
  ModelSpec spec;
  spec.seq_len = 100;
  spec.n_features = n_features;
  spec.layers.push_back(Conv1DSpec{15, 4, 4});
  spec.layers.push_back(LstmSpec{32});
  spec.layers.push_back(DenseSpec{64});
  spec.layers.push_back(LeakyReluSpec{});
  spec.layers.push_back(DropoutSpec{0.2});
  spec.layers.push_back(DenseSpec{64});
  spec.layers.push_back(LeakyReluSpec{});
  spec.layers.push_back(DropoutSpec{0.2});
  spec.layers.push_back(DenseSpec{1});
  return build_model(std::move(spec), seed);
}

std::pair<ad::Tensor, ad::Tensor> lstm_step(ad::Tape& tape, const ad::Tensor& x,
                                            const ad::Tensor& h, const ad::Tensor& c,
                                            const LstmParamRefs& p) {
  using namespace ad;
  auto gate = [&](const Tensor& wi, const Tensor& wh, const Tensor& b) {
    return add(tape, add(tape, matmul(tape, wi, x), matmul(tape, wh, h)), b);
  };
  const Tensor i = sigmoid(tape, gate(p.w_ii, p.w_hi, p.b_i));
  const Tensor f = sigmoid(tape, gate(p.w_if, p.w_hf, p.b_f));
  const Tensor g = tanh(tape, gate(p.w_ig, p.w_hg, p.b_g));
  const Tensor o = sigmoid(tape, gate(p.w_io, p.w_ho, p.b_o));
  Tensor c_next = add(tape, mul(tape, f, c), mul(tape, i, g));
  Tensor h_next = mul(tape, o, tanh(tape, c_next));
  return {std::move(h_next), std::move(c_next)};
}

LstmTrace run_lstm(ad::Tape& tape, const ad::Tensor& seq, const LstmParamRefs& p,
                   const ad::Tensor& h0, const ad::Tensor& c0) {
  if (seq.shape.size() != 2 || seq.shape[0] == 0)
    throw std::invalid_argument("run_lstm: empty sequence");
  LstmTrace trace;
  trace.h = h0;
  trace.c = c0;
  const std::size_t steps = seq.shape[0];
  trace.hidden.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const ad::Tensor x_t = ad::transpose(tape, ad::row(tape, seq, t));
    auto [h, c] = lstm_step(tape, x_t, trace.h, trace.c, p);
    trace.h = h;
    trace.c = std::move(c);
    trace.hidden.push_back(std::move(h));
  }
  return trace;
}

ad::Tensor attention_weights(ad::Tape& tape, const ad::Tensor& all_hidden,
                             const ad::Tensor& query) {
  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(query.size()));
  const ad::Tensor scores = ad::scale(tape, ad::matmul(tape, all_hidden, query), inv_sqrt_h);
  return ad::softmax(tape, scores);
}

ad::Tensor attention(ad::Tape& tape, const ad::Tensor& all_hidden, const ad::Tensor& query,
                     const ad::Tensor& w_proj, const ad::Tensor& b_proj) {
  const ad::Tensor weights = attention_weights(tape, all_hidden, query);
  const ad::Tensor context =
      ad::transpose(tape, ad::matmul(tape, ad::transpose(tape, weights), all_hidden));
  const ad::Tensor joined = ad::concat(tape, context, query);
  return ad::add(tape, ad::matmul(tape, w_proj, joined), b_proj);
}

namespace {

LstmParamRefs lstm_refs(const Model& m) {
  return LstmParamRefs{m.params.at("lstm.w_ii"), m.params.at("lstm.w_if"),
                       m.params.at("lstm.w_ig"), m.params.at("lstm.w_io"),
                       m.params.at("lstm.w_hi"), m.params.at("lstm.w_hf"),
                       m.params.at("lstm.w_hg"), m.params.at("lstm.w_ho"),
                       m.params.at("lstm.b_i"),  m.params.at("lstm.b_f"),
                       m.params.at("lstm.b_g"),  m.params.at("lstm.b_o")};
}

}  // namespace

ad::Tensor forward_one(ad::Tape& tape, Model& model, const ad::Tensor& seq, bool training,
                       Rng& rng) {
  if (seq.shape.size() != 2 || seq.shape[0] != static_cast<std::size_t>(model.spec.seq_len) ||
      seq.shape[1] != static_cast<std::size_t>(model.spec.n_features))
    throw std::invalid_argument(
        "forward: input shape " + ad::shape_str(seq.shape) + " does not match model input {" +
        std::to_string(model.spec.seq_len) + "x" + std::to_string(model.spec.n_features) + "}");

  // Leaves are re-registered on every pass (the tape is rebuilt per forward).
  for (auto& [name, t] : model.params)
    if (t.node < 0 || static_cast<std::size_t>(t.node) >= tape.node_count()) tape.watch(t);

  using ad::Tensor;
  Tensor cur_seq = seq;
  Tensor vec;  // post-collapse column vector
  int dense_idx = 0;

  const auto& layers = model.spec.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (const auto* conv = std::get_if<Conv1DSpec>(&l)) {
      cur_seq = ad::conv1d(tape, cur_seq, model.params.at("conv.kernels"),
                           model.params.at("conv.bias"), conv->stride);
    } else if (const auto* lstm = std::get_if<LstmSpec>(&l)) {
      const auto h = static_cast<std::size_t>(lstm->hidden);
      const Tensor zero = Tensor::zeros({h, 1});
      const LstmTrace trace = run_lstm(tape, cur_seq, lstm_refs(model), zero, zero);
      const bool next_is_attention =
          i + 1 < layers.size() && std::holds_alternative<AttentionSpec>(layers[i + 1]);
      if (next_is_attention) {
        const Tensor all_hidden = ad::stack_rows(tape, trace.hidden);
        vec = attention(tape, all_hidden, trace.h, model.params.at("attn.w_proj"),
                        model.params.at("attn.b_proj"));
        ++i;  // attention layer consumed here
      } else {
        vec = trace.h;
      }
    } else if (std::get_if<DenseSpec>(&l)) {
      const std::string prefix = "dense" + std::to_string(dense_idx++);
      vec = ad::add(tape, ad::matmul(tape, model.params.at(prefix + ".w"), vec),
                    model.params.at(prefix + ".b"));
    } else if (const auto* relu = std::get_if<LeakyReluSpec>(&l)) {
      vec = ad::leaky_relu(tape, vec, relu->negative_slope);
    } else if (const auto* drop = std::get_if<DropoutSpec>(&l)) {
      vec = ad::dropout(tape, vec, drop->p, training, rng);
    } else if (std::get_if<SigmoidSpec>(&l)) {
      vec = ad::sigmoid(tape, vec);
    }
  }
  return vec;  // {1,1}
}

ad::Tensor forward_batch(ad::Tape& tape, Model& model, std::span<const double> data,
                         std::size_t batch, bool training, Rng& rng) {
  const auto t = static_cast<std::size_t>(model.spec.seq_len);
  const auto f = static_cast<std::size_t>(model.spec.n_features);
  if (data.size() != batch * t * f)
    throw std::invalid_argument("forward_batch: data size does not match batch x seq x features");

  std::vector<ad::Tensor> preds;
  preds.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    ad::Tensor seq({t, f}, std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(b * t * f),
                                               data.begin() + static_cast<std::ptrdiff_t>((b + 1) * t * f)));
    preds.push_back(forward_one(tape, model, seq, training, rng));
  }
  return ad::stack_rows(tape, preds);  // {B, 1}, one prediction per row
}

}  // namespace cyclelife::nn
