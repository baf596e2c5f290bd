// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "morph/errors.hpp"

namespace morph {

void ArchConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("dropout must be in [0, 1)");
  }
}

namespace {

using Eigen::Index;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowArr = Eigen::Array<S, 1, Eigen::Dynamic>;

template <typename S>
S neg_inf() {
  return -std::numeric_limits<S>::infinity();
}

// Symbols the decoder may never produce.
constexpr SymbolId kMaskedOutputs[] = {kSos, kSep, kPad};

template <typename S>
Mat<S> gather_columns(const Eigen::Map<const Mat<S>>& table,
                      std::span<const SymbolId> ids) {
  Mat<S> out(table.rows(), static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out.col(static_cast<Index>(k)) = table.col(ids[k]);
  }
  return out;
}

template <typename S>
Mat<S> dropout_mask(Index rows, Index cols, double p, Rng& rng) {
  Mat<S> mask(rows, cols);
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) {
      mask(i, j) = rng.bernoulli(p) ? S(0) : scale;
    }
  }
  return mask;
}

// In: z = Wx x + b. Adds the recurrent term and evaluates one LSTM step.
template <typename S, typename WhMap>
void lstm_cell(Mat<S>& z, const WhMap& wh, const Mat<S>& h_prev,
               const Mat<S>& c_prev, Mat<S>& gates, Mat<S>& c,
               Mat<S>& tanh_c, Mat<S>& h) {
  const Index hs = h_prev.rows();
  z.noalias() += wh * h_prev;
  gates.resize(z.rows(), z.cols());
  auto sig = [](auto x) { return (S(1) + (-x).exp()).inverse(); };
  gates.topRows(2 * hs) = sig(z.topRows(2 * hs).array()).matrix();
  gates.middleRows(2 * hs, hs) = z.middleRows(2 * hs, hs).array().tanh().matrix();
  gates.bottomRows(hs) = sig(z.bottomRows(hs).array()).matrix();
  auto i = gates.topRows(hs).array();
  auto f = gates.middleRows(hs, hs).array();
  auto g = gates.middleRows(2 * hs, hs).array();
  auto o = gates.bottomRows(hs).array();
  c = (f * c_prev.array() + i * g).matrix();
  tanh_c = c.array().tanh().matrix();
  h = (o * tanh_c.array()).matrix();
}

// Gradients of one LSTM step given dh and dc with respect to its outputs.
template <typename S>
void lstm_cell_backward(const Mat<S>& gates, const Mat<S>& tanh_c,
                        const Mat<S>& c_prev, const Mat<S>& dh,
                        const Mat<S>& dc, Mat<S>& dz, Mat<S>& dc_prev) {
  const Index hs = dh.rows();
  auto i = gates.topRows(hs).array();
  auto f = gates.middleRows(hs, hs).array();
  auto g = gates.middleRows(2 * hs, hs).array();
  auto o = gates.bottomRows(hs).array();
  auto tc = tanh_c.array();
  Mat<S> dct = (dc.array() + dh.array() * o * (S(1) - tc * tc)).matrix();
  auto d = dct.array();
  dz.resize(4 * hs, dh.cols());
  dz.topRows(hs) = (d * g * i * (S(1) - i)).matrix();
  dz.middleRows(hs, hs) = (d * c_prev.array() * f * (S(1) - f)).matrix();
  dz.middleRows(2 * hs, hs) = (d * i * (S(1) - g * g)).matrix();
  dz.bottomRows(hs) = (dh.array() * tc * o * (S(1) - o)).matrix();
  dc_prev = (d * f).matrix();
}

// Column-wise softmax; -inf entries get probability zero. Returns log of the
// normalizer per column.
template <typename S>
RowArr<S> softmax_columns(Mat<S>& x) {
  RowArr<S> log_norm(x.cols());
  for (Index b = 0; b < x.cols(); ++b) {
    S mx = x.col(b).maxCoeff();
    x.col(b) = (x.col(b).array() - mx).exp().matrix();
    S sum = x.col(b).sum();
    x.col(b) /= sum;
    log_norm(b) = mx + std::log(sum);
  }
  return log_norm;
}

}  // namespace

// Per-batch activations kept for backpropagation.
template <typename S>
struct EncoderTrace {
  struct Direction {
    Mat<S> gates, c, tanh_c, h;  // per position, masked carry applied to c, h
  };
  std::vector<Mat<S>> inputs;     // per layer, after dropout
  std::vector<Mat<S>> drop_masks; // per layer, empty when not training
  std::vector<Direction> dirs;    // [layer * 2 + dir]
  std::vector<Mat<S>> bridge_in;  // per layer, 2H x B
  std::vector<std::vector<SymbolId>> padded;  // sources padded with PAD
  std::vector<RowArr<S>> time_mask;           // per position, 1 x B
};

template <typename S>
struct StepTrace {
  std::vector<SymbolId> inputs;
  Mat<S> emb_mask;
  std::vector<Mat<S>> x;          // per layer input (after dropout)
  std::vector<Mat<S>> layer_masks;  // dropout on outputs of layers < L-1
  std::vector<Mat<S>> gates, c, tanh_c, h;
  std::vector<Mat<S>> h_prev, c_prev;
  Mat<S> alpha, ctx, u, a, out_mask, a_out, zo;
  Mat<S> probs;
  RowArr<S> log_norm;
};

namespace detail {

template <typename S>
struct Impl {
  using Model = Seq2Seq<S>;

  static typename Model::Encoded encode(const Model& m,
                                        std::span<const std::vector<SymbolId>> sources,
                                        bool training, Rng* rng,
                                        EncoderTrace<S>* trace) {
    const auto& arch = m.arch();
    const Index hs = arch.hidden_size;
    const int layers = arch.num_layers;
    typename Model::Encoded enc;
    enc.batch = static_cast<int>(sources.size());
    enc.steps = 0;
    for (const auto& s : sources) {
      enc.lengths.push_back(static_cast<int>(s.size()));
      enc.steps = std::max(enc.steps, static_cast<int>(s.size()));
    }
    const Index B = enc.batch;
    const Index T = enc.steps;

    std::vector<SymbolId> flat(static_cast<std::size_t>(T * B), kPad);
    for (Index b = 0; b < B; ++b) {
      const auto& src = sources[static_cast<std::size_t>(b)];
      for (Index t = 0; t < static_cast<Index>(src.size()); ++t) {
        flat[static_cast<std::size_t>(t * B + b)] = src[static_cast<std::size_t>(t)];
      }
    }
    std::vector<RowArr<S>> mask(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) {
      mask[t].resize(B);
      for (Index b = 0; b < B; ++b) mask[t](b) = t < enc.lengths[b] ? S(1) : S(0);
    }

    Mat<S> x = gather_columns<S>(m.tensor(m.embedding_tensor()), flat);
    std::vector<Mat<S>> finals(static_cast<std::size_t>(layers));
    if (trace) {
      trace->padded.assign(sources.begin(), sources.end());
      trace->time_mask = mask;
      trace->dirs.resize(static_cast<std::size_t>(layers * 2));
    }
    for (int l = 0; l < layers; ++l) {
      if (training && arch.dropout > 0) {
        Mat<S> dm = dropout_mask<S>(x.rows(), x.cols(), arch.dropout, *rng);
        x.array() *= dm.array();
        if (trace) trace->drop_masks.push_back(std::move(dm));
      } else if (trace) {
        trace->drop_masks.emplace_back();
      }
      Mat<S> out(2 * hs, T * B);
      Mat<S> bridge_in(2 * hs, B);
      for (int dir = 0; dir < 2; ++dir) {
        std::size_t k = static_cast<std::size_t>(l * 2 + dir);
        auto wx = m.tensor(m.enc_wx_[k]);
        auto wh = m.tensor(m.enc_wh_[k]);
        auto bias = m.tensor(m.enc_b_[k]);
        Mat<S> zx = wx * x;
        zx.colwise() += bias.col(0);
        Mat<S> h = Mat<S>::Zero(hs, B);
        Mat<S> c = Mat<S>::Zero(hs, B);
        typename EncoderTrace<S>::Direction* tr =
            trace ? &trace->dirs[k] : nullptr;
        if (tr) {
          tr->gates.resize(4 * hs, T * B);
          tr->c.resize(hs, T * B);
          tr->tanh_c.resize(hs, T * B);
          tr->h.resize(hs, T * B);
        }
        Mat<S> z, gates, c_new, tanh_c, h_new;
        for (Index step = 0; step < T; ++step) {
          Index t = dir == 0 ? step : T - 1 - step;
          z = zx.middleCols(t * B, B);
          lstm_cell<S>(z, wh, h, c, gates, c_new, tanh_c, h_new);
          const auto& mt = mask[static_cast<std::size_t>(t)];
          h = (h_new.array().rowwise() * mt + h.array().rowwise() * (S(1) - mt)).matrix();
          c = (c_new.array().rowwise() * mt + c.array().rowwise() * (S(1) - mt)).matrix();
          out.block(dir * hs, t * B, hs, B) = h;
          if (tr) {
            tr->gates.middleCols(t * B, B) = gates;
            tr->c.middleCols(t * B, B) = c;
            tr->tanh_c.middleCols(t * B, B) = tanh_c;
            tr->h.middleCols(t * B, B) = h;
          }
        }
        // Forward direction ends at the last position, backward at the first.
        bridge_in.middleRows(dir * hs, hs) = h;
      }
      auto bw = m.tensor(m.bridge_w_[l]);
      auto bb = m.tensor(m.bridge_b_[l]);
      Mat<S> init = bw * bridge_in;
      init.colwise() += bb.col(0);
      enc.init_h.push_back(init.array().tanh().matrix());
      if (trace) {
        trace->inputs.push_back(x);
        trace->bridge_in.push_back(bridge_in);
      }
      x = std::move(out);
    }
    enc.memory = std::move(x);
    enc.keys = m.tensor(m.att_) * enc.memory;
    return enc;
  }

  static Mat<S> step(const Model& m, std::span<const SymbolId> inputs,
                     typename Model::DecoderState& state,
                     const typename Model::Encoded& enc, bool training,
                     Rng* rng, StepTrace<S>* tr, Mat<S>* attention,
                     RowArr<S>* log_norm_out) {
    const auto& arch = m.arch();
    const Index hs = arch.hidden_size;
    const Index D = arch.embedding_dim;
    const int layers = arch.num_layers;
    const Index B = enc.batch;
    const bool drop = training && arch.dropout > 0;

    auto emb = m.tensor(m.embedding_tensor());
    Mat<S> e = gather_columns<S>(emb, inputs);
    if (tr) tr->inputs.assign(inputs.begin(), inputs.end());
    if (drop) {
      Mat<S> dm = dropout_mask<S>(D, B, arch.dropout, *rng);
      e.array() *= dm.array();
      if (tr) tr->emb_mask = std::move(dm);
    }
    Mat<S> x(D + hs, B);
    x.topRows(D) = e;
    x.bottomRows(hs) = state.feed;

    Mat<S> z, gates, c_new, tanh_c, h_new;
    for (int l = 0; l < layers; ++l) {
      auto wx = m.tensor(m.dec_wx_[l]);
      auto wh = m.tensor(m.dec_wh_[l]);
      auto bias = m.tensor(m.dec_b_[l]);
      z = wx * x;
      z.colwise() += bias.col(0);
      if (tr) {
        tr->x.push_back(x);
        tr->h_prev.push_back(state.h[l]);
        tr->c_prev.push_back(state.c[l]);
      }
      lstm_cell<S>(z, wh, state.h[l], state.c[l], gates, c_new, tanh_c, h_new);
      state.h[l] = h_new;
      state.c[l] = c_new;
      if (tr) {
        tr->gates.push_back(gates);
        tr->c.push_back(c_new);
        tr->tanh_c.push_back(tanh_c);
        tr->h.push_back(h_new);
      }
      if (l + 1 < layers) {
        x = h_new;
        if (drop) {
          Mat<S> dm = dropout_mask<S>(hs, B, arch.dropout, *rng);
          x.array() *= dm.array();
          if (tr) tr->layer_masks.push_back(std::move(dm));
        }
      }
    }
    const Mat<S>& top = state.h[layers - 1];

    const Index T = enc.steps;
    Mat<S> alpha = Mat<S>::Zero(T, B);
    Mat<S> ctx = Mat<S>::Zero(2 * hs, B);
    for (Index b = 0; b < B; ++b) {
      const Index len = enc.lengths[b];
      S mx = neg_inf<S>();
      for (Index j = 0; j < len; ++j) {
        alpha(j, b) = top.col(b).dot(enc.keys.col(j * B + b));
        mx = std::max(mx, alpha(j, b));
      }
      S sum = 0;
      for (Index j = 0; j < len; ++j) {
        alpha(j, b) = std::exp(alpha(j, b) - mx);
        sum += alpha(j, b);
      }
      for (Index j = 0; j < len; ++j) {
        alpha(j, b) /= sum;
        ctx.col(b).noalias() += alpha(j, b) * enc.memory.col(j * B + b);
      }
    }

    Mat<S> u(3 * hs, B);
    u.topRows(hs) = top;
    u.bottomRows(2 * hs) = ctx;
    Mat<S> a = m.tensor(m.comb_w_) * u;
    a.colwise() += m.tensor(m.comb_b_).col(0);
    a = a.array().tanh().matrix();
    state.feed = a;

    Mat<S> a_out = a;
    if (drop) {
      Mat<S> dm = dropout_mask<S>(hs, B, arch.dropout, *rng);
      a_out.array() *= dm.array();
      if (tr) tr->out_mask = std::move(dm);
    }
    Mat<S> zo = m.tensor(m.proj_) * a_out;
    Mat<S> logits = emb.transpose() * zo;
    logits.colwise() += m.tensor(m.out_b_).col(0);
    for (SymbolId masked : kMaskedOutputs) {
      logits.row(masked).setConstant(neg_inf<S>());
    }
    RowArr<S> log_norm = softmax_columns<S>(logits);
    // exp() may flush -inf to a denormal instead of zero.
    for (SymbolId masked : kMaskedOutputs) logits.row(masked).setZero();
    if (log_norm_out) *log_norm_out = log_norm;
    if (attention) *attention = alpha;
    if (tr) {
      tr->alpha = std::move(alpha);
      tr->ctx = std::move(ctx);
      tr->u = std::move(u);
      tr->a = std::move(a);
      tr->a_out = std::move(a_out);
      tr->zo = std::move(zo);
      tr->probs = logits;
      tr->log_norm = std::move(log_norm);
    }
    return logits;
  }
};

}  // namespace detail

template <typename Scalar>
Seq2Seq<Scalar>::Seq2Seq(const ArchConfig& arch, std::size_t vocab_size,
                         std::uint64_t seed)
    : arch_(arch), vocab_size_(vocab_size) {
  arch_.validate();
  if (vocab_size <= static_cast<std::size_t>(kNumReserved)) {
    throw std::invalid_argument("vocabulary holds only reserved symbols");
  }
  const Index D = arch.embedding_dim;
  const Index H = arch.hidden_size;
  const Index V = static_cast<Index>(vocab_size);
  emb_ = add_tensor("embedding", D, V);
  for (int l = 0; l < arch.num_layers; ++l) {
    Index in = l == 0 ? D : 2 * H;
    for (const char* dir : {"fwd", "bwd"}) {
      std::string prefix = "encoder.l" + std::to_string(l) + "." + dir + ".";
      enc_wx_.push_back(add_tensor(prefix + "wx", 4 * H, in));
      enc_wh_.push_back(add_tensor(prefix + "wh", 4 * H, H));
      enc_b_.push_back(add_tensor(prefix + "b", 4 * H, 1));
    }
  }
  for (int l = 0; l < arch.num_layers; ++l) {
    std::string prefix = "bridge.l" + std::to_string(l) + ".";
    bridge_w_.push_back(add_tensor(prefix + "w", H, 2 * H));
    bridge_b_.push_back(add_tensor(prefix + "b", H, 1));
  }
  for (int l = 0; l < arch.num_layers; ++l) {
    Index in = l == 0 ? D + H : H;
    std::string prefix = "decoder.l" + std::to_string(l) + ".";
    dec_wx_.push_back(add_tensor(prefix + "wx", 4 * H, in));
    dec_wh_.push_back(add_tensor(prefix + "wh", 4 * H, H));
    dec_b_.push_back(add_tensor(prefix + "b", 4 * H, 1));
  }
  att_ = add_tensor("attention.w", H, 2 * H);
  comb_w_ = add_tensor("combine.w", H, 3 * H);
  comb_b_ = add_tensor("combine.b", H, 1);
  proj_ = add_tensor("output.proj", D, H);
  out_b_ = add_tensor("output.bias", V, 1);

  Rng rng(seed);
  auto fill_uniform = [&](std::size_t t, double k) {
    auto m = tensor(t);
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = 0; i < m.rows(); ++i) {
        m(i, j) = static_cast<Scalar>(rng.uniform(-k, k));
      }
    }
  };
  const double lstm_k = 1.0 / std::sqrt(static_cast<double>(H));
  fill_uniform(emb_, 0.1);
  for (std::size_t k = 0; k < enc_wx_.size(); ++k) {
    fill_uniform(enc_wx_[k], lstm_k);
    fill_uniform(enc_wh_[k], lstm_k);
    tensor(enc_b_[k]).middleRows(H, H).setOnes();
  }
  for (std::size_t l = 0; l < bridge_w_.size(); ++l) {
    fill_uniform(bridge_w_[l], 1.0 / std::sqrt(2.0 * H));
  }
  for (std::size_t l = 0; l < dec_wx_.size(); ++l) {
    fill_uniform(dec_wx_[l], lstm_k);
    fill_uniform(dec_wh_[l], lstm_k);
    tensor(dec_b_[l]).middleRows(H, H).setOnes();
  }
  fill_uniform(att_, 1.0 / std::sqrt(2.0 * H));
  fill_uniform(comb_w_, 1.0 / std::sqrt(3.0 * H));
  fill_uniform(proj_, lstm_k);
}

template <typename Scalar>
std::size_t Seq2Seq<Scalar>::add_tensor(std::string name, Eigen::Index rows,
                                        Eigen::Index cols) {
  constexpr std::size_t align = detail::kTensorAlignBytes / sizeof(Scalar);
  const std::size_t offset = (params_.size() + align - 1) / align * align;
  Tensor t{std::move(name), rows, cols, offset};
  params_.resize(offset + static_cast<std::size_t>(rows * cols), Scalar(0));
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

template <typename Scalar>
typename Seq2Seq<Scalar>::MatrixMap Seq2Seq<Scalar>::tensor(std::size_t index) {
  const auto& t = tensors_.at(index);
  return MatrixMap(params_.data() + t.offset, t.rows, t.cols);
}

template <typename Scalar>
typename Seq2Seq<Scalar>::ConstMatrixMap Seq2Seq<Scalar>::tensor(
    std::size_t index) const {
  const auto& t = tensors_.at(index);
  return ConstMatrixMap(params_.data() + t.offset, t.rows, t.cols);
}

template <typename Scalar>
void Seq2Seq<Scalar>::validate_ids(std::span<const SymbolId> ids) const {
  for (SymbolId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
      throw std::out_of_range("symbol id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(vocab_size_));
    }
  }
}

template <typename Scalar>
typename Seq2Seq<Scalar>::Encoded Seq2Seq<Scalar>::encode(
    std::span<const std::vector<SymbolId>> sources) const {
  if (sources.empty()) throw std::invalid_argument("empty batch");
  for (const auto& s : sources) {
    if (s.empty()) throw std::invalid_argument("empty source sequence");
    validate_ids(s);
  }
  return detail::Impl<Scalar>::encode(*this, sources, false, nullptr, nullptr);
}

template <typename Scalar>
typename Seq2Seq<Scalar>::DecoderState Seq2Seq<Scalar>::initial_state(
    const Encoded& encoded) const {
  DecoderState st;
  const Index H = arch_.hidden_size;
  st.h = encoded.init_h;
  for (int l = 0; l < arch_.num_layers; ++l) {
    st.c.push_back(Matrix::Zero(H, encoded.batch));
  }
  st.feed = Matrix::Zero(H, encoded.batch);
  return st;
}

template <typename Scalar>
typename Seq2Seq<Scalar>::StepOutput Seq2Seq<Scalar>::decode_step(
    std::span<const SymbolId> previous, DecoderState& state,
    const Encoded& encoded) const {
  if (static_cast<int>(previous.size()) != encoded.batch) {
    throw std::invalid_argument("decode_step: batch size mismatch");
  }
  validate_ids(previous);
  StepOutput out;
  out.probs = detail::Impl<Scalar>::step(*this, previous, state, encoded,
                                         false, nullptr, nullptr,
                                         &out.attention, nullptr);
  return out;
}

template <typename Scalar>
std::vector<std::vector<SymbolId>> Seq2Seq<Scalar>::greedy_decode(
    std::span<const std::vector<SymbolId>> sources,
    std::span<const int> max_lens) const {
  if (max_lens.size() != sources.size()) {
    throw std::invalid_argument("greedy_decode: one max_len per source");
  }
  std::vector<std::vector<SymbolId>> outputs(sources.size(),
                                             std::vector<SymbolId>{kSos});
  if (sources.empty()) return outputs;
  const auto B = sources.size();
  std::vector<bool> active(B, true);
  std::size_t remaining = B;
  for (std::size_t b = 0; b < B; ++b) {
    if (max_lens[b] <= 1) {
      active[b] = false;
      --remaining;
    }
  }
  if (remaining > 0) {
    Encoded enc = encode(sources);
    DecoderState state = initial_state(enc);
    std::vector<SymbolId> prev(B, kSos);
    while (remaining > 0) {
      auto step = detail::Impl<Scalar>::step(*this, prev, state, enc, false,
                                             nullptr, nullptr, nullptr, nullptr);
      for (std::size_t b = 0; b < B; ++b) {
        Index best = 0;
        step.col(static_cast<Index>(b)).maxCoeff(&best);
        prev[b] = static_cast<SymbolId>(best);
        if (!active[b]) continue;
        outputs[b].push_back(prev[b]);
        if (prev[b] == kEos ||
            static_cast<int>(outputs[b].size()) >= max_lens[b]) {
          active[b] = false;
          --remaining;
        }
      }
    }
  }
  for (auto& out : outputs) {
    if (out.back() != kEos) out.push_back(kEos);
  }
  return outputs;
}

template <typename Scalar>
std::vector<SymbolId> Seq2Seq<Scalar>::greedy_decode(
    const std::vector<SymbolId>& source, int max_len) const {
  std::vector<std::vector<SymbolId>> one{source};
  int lens[] = {max_len};
  return greedy_decode(std::span<const std::vector<SymbolId>>(one), lens)[0];
}

template <typename Scalar>
Scalar Seq2Seq<Scalar>::loss(std::span<const EncodedPair> batch,
                             const LossOptions& options, Rng* rng,
                             std::span<Scalar> gradient) const {
  using S = Scalar;
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (options.training && rng == nullptr) {
    throw std::invalid_argument("training mode needs a random stream");
  }
  const bool want_grad = !gradient.empty();
  if (want_grad && gradient.size() != params_.size()) {
    throw std::invalid_argument("gradient buffer has the wrong size");
  }
  std::vector<std::vector<SymbolId>> sources;
  sources.reserve(batch.size());
  std::size_t max_target = 0;
  for (const auto& p : batch) {
    if (p.source.empty() || p.target.size() < 2) {
      throw std::invalid_argument("malformed encoded pair");
    }
    validate_ids(p.source);
    validate_ids(p.target);
    sources.push_back(p.source);
    max_target = std::max(max_target, p.target.size());
  }
  const Index B = static_cast<Index>(batch.size());
  const Index H = arch_.hidden_size;
  const Index D = arch_.embedding_dim;
  const int layers = arch_.num_layers;
  const Index steps = static_cast<Index>(max_target) - 1;

  EncoderTrace<S> etrace;
  Encoded enc = detail::Impl<S>::encode(*this, sources, options.training, rng,
                                        want_grad ? &etrace : nullptr);
  DecoderState state = initial_state(enc);

  std::vector<StepTrace<S>> traces(want_grad ? static_cast<std::size_t>(steps) : 0);
  std::vector<SymbolId> inputs(static_cast<std::size_t>(B), kSos);
  std::vector<SymbolId> predicted(static_cast<std::size_t>(B), kSos);
  std::vector<std::vector<SymbolId>> gold(static_cast<std::size_t>(steps),
                                          std::vector<SymbolId>(B, kPad));
  double total = 0.0;
  std::size_t tokens = 0;
  for (Index t = 0; t < steps; ++t) {
    for (Index b = 0; b < B; ++b) {
      const auto& tgt = batch[static_cast<std::size_t>(b)].target;
      if (t == 0) {
        inputs[b] = kSos;
      } else {
        bool force = !options.training || rng->bernoulli(options.teacher_forcing_prob);
        SymbolId truth = static_cast<std::size_t>(t) < tgt.size() ? tgt[t] : kPad;
        inputs[b] = force ? truth : predicted[b];
      }
      gold[t][b] = static_cast<std::size_t>(t + 1) < tgt.size() ? tgt[t + 1] : kPad;
    }
    Mat<S> probs = detail::Impl<S>::step(*this, inputs, state, enc,
                                         options.training, rng,
                                         want_grad ? &traces[t] : nullptr,
                                         nullptr, nullptr);
    for (Index b = 0; b < B; ++b) {
      Index best = 0;
      probs.col(b).maxCoeff(&best);
      predicted[b] = static_cast<SymbolId>(best);
      SymbolId y = gold[t][b];
      if (y == kPad) continue;
      S p = probs(y, b);
      double logp = p > 0 ? std::log(static_cast<double>(p))
                          : -std::numeric_limits<double>::infinity();
      total -= logp;
      ++tokens;
    }
  }
  const double mean = total / static_cast<double>(tokens);
  if (!want_grad) return static_cast<S>(mean);

  // Accumulate in aligned scratch space; the caller's buffer may sit
  // anywhere.
  detail::AlignedVector<S> scratch(params_.size(), S(0));
  auto grad = [&](std::size_t index) {
    const auto& t = tensors_[index];
    return MatrixMap(scratch.data() + t.offset, t.rows, t.cols);
  };
  auto emb = tensor(emb_);
  auto g_emb = grad(emb_);
  const S inv_tokens = S(1) / static_cast<S>(tokens);
  const Index T = enc.steps;

  // Decoder, backwards in time.
  std::vector<Mat<S>> dh_rec(static_cast<std::size_t>(layers), Mat<S>::Zero(H, B));
  std::vector<Mat<S>> dc_rec(static_cast<std::size_t>(layers), Mat<S>::Zero(H, B));
  std::vector<Mat<S>> dZ(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) dZ[l].resize(4 * H, steps * B);
  Mat<S> dfeed = Mat<S>::Zero(H, B);
  Mat<S> dM = Mat<S>::Zero(2 * H, T * B);
  Mat<S> dK = Mat<S>::Zero(H, T * B);
  auto wc = tensor(comb_w_);
  auto proj = tensor(proj_);
  for (Index t = steps - 1; t >= 0; --t) {
    auto& tr = traces[static_cast<std::size_t>(t)];
    Mat<S> dlogits = tr.probs;
    for (Index b = 0; b < B; ++b) {
      SymbolId y = gold[t][b];
      if (y == kPad) {
        dlogits.col(b).setZero();
      } else {
        dlogits(y, b) -= S(1);
      }
    }
    dlogits *= inv_tokens;
    grad(out_b_).col(0) += dlogits.rowwise().sum();
    g_emb.noalias() += tr.zo * dlogits.transpose();
    Mat<S> dzo = emb * dlogits;
    grad(proj_).noalias() += dzo * tr.a_out.transpose();
    Mat<S> da = proj.transpose() * dzo;
    if (tr.out_mask.size()) da.array() *= tr.out_mask.array();
    da += dfeed;
    Mat<S> dpre = (da.array() * (S(1) - tr.a.array() * tr.a.array())).matrix();
    grad(comb_w_).noalias() += dpre * tr.u.transpose();
    grad(comb_b_).col(0) += dpre.rowwise().sum();
    Mat<S> du = wc.transpose() * dpre;
    Mat<S> dtop = du.topRows(H);
    const Mat<S>& top = tr.h[layers - 1];
    for (Index b = 0; b < B; ++b) {
      const Index len = enc.lengths[b];
      auto dctx = du.col(b).tail(2 * H);
      Eigen::Matrix<S, Eigen::Dynamic, 1> dalpha(len);
      S dot = 0;
      for (Index j = 0; j < len; ++j) {
        dalpha(j) = dctx.dot(enc.memory.col(j * B + b));
        dM.col(j * B + b).noalias() += tr.alpha(j, b) * dctx;
        dot += tr.alpha(j, b) * dalpha(j);
      }
      for (Index j = 0; j < len; ++j) {
        S ds = tr.alpha(j, b) * (dalpha(j) - dot);
        dtop.col(b).noalias() += ds * enc.keys.col(j * B + b);
        dK.col(j * B + b).noalias() += ds * top.col(b);
      }
    }
    std::vector<Mat<S>> dh_now = dh_rec;
    dh_now[layers - 1] += dtop;
    Mat<S> dz, dc_prev;
    for (int l = layers - 1; l >= 0; --l) {
      lstm_cell_backward<S>(tr.gates[l], tr.tanh_c[l], tr.c_prev[l], dh_now[l],
                            dc_rec[l], dz, dc_prev);
      dZ[l].middleCols(t * B, B) = dz;
      dh_rec[l] = tensor(dec_wh_[l]).transpose() * dz;
      dc_rec[l] = dc_prev;
      Mat<S> dx = tensor(dec_wx_[l]).transpose() * dz;
      if (l > 0) {
        if (tr.layer_masks.size()) dx.array() *= tr.layer_masks[l - 1].array();
        dh_now[l - 1] += dx;
      } else {
        Mat<S> de = dx.topRows(D);
        if (tr.emb_mask.size()) de.array() *= tr.emb_mask.array();
        for (Index b = 0; b < B; ++b) g_emb.col(tr.inputs[b]) += de.col(b);
        dfeed = dx.bottomRows(H);
      }
    }
  }
  for (int l = 0; l < layers; ++l) {
    const Index in = tensors_[dec_wx_[l]].cols;
    Mat<S> X(in, steps * B);
    Mat<S> Hp(H, steps * B);
    for (Index t = 0; t < steps; ++t) {
      X.middleCols(t * B, B) = traces[t].x[l];
      Hp.middleCols(t * B, B) = traces[t].h_prev[l];
    }
    grad(dec_wx_[l]).noalias() += dZ[l] * X.transpose();
    grad(dec_wh_[l]).noalias() += dZ[l] * Hp.transpose();
    grad(dec_b_[l]).col(0) += dZ[l].rowwise().sum();
  }

  // Attention keys and decoder initialization.
  grad(att_).noalias() += dK * enc.memory.transpose();
  dM.noalias() += tensor(att_).transpose() * dK;
  std::vector<Mat<S>> d_bridge_in(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    const Mat<S>& h0 = enc.init_h[l];
    Mat<S> dpre = (dh_rec[l].array() * (S(1) - h0.array() * h0.array())).matrix();
    grad(bridge_w_[l]).noalias() += dpre * etrace.bridge_in[l].transpose();
    grad(bridge_b_[l]).col(0) += dpre.rowwise().sum();
    d_bridge_in[l] = tensor(bridge_w_[l]).transpose() * dpre;
  }

  // Encoder, top layer first.
  Mat<S> d_out = std::move(dM);
  for (int l = layers - 1; l >= 0; --l) {
    d_out.block(0, (T - 1) * B, H, B) += d_bridge_in[l].topRows(H);
    d_out.block(H, 0, H, B) += d_bridge_in[l].bottomRows(H);
    const Mat<S>& x = etrace.inputs[l];
    Mat<S> dx = Mat<S>::Zero(x.rows(), x.cols());
    for (int dir = 0; dir < 2; ++dir) {
      const std::size_t k = static_cast<std::size_t>(l * 2 + dir);
      const auto& tr = etrace.dirs[k];
      Mat<S> dZe(4 * H, T * B);
      Mat<S> Hp = Mat<S>::Zero(H, T * B);
      Mat<S> dh_r = Mat<S>::Zero(H, B);
      Mat<S> dc_r = Mat<S>::Zero(H, B);
      Mat<S> zero = Mat<S>::Zero(H, B);
      Mat<S> dz, dc_prev, c_prev, dh, dh_cell, dc_cell;
      for (Index step = T - 1; step >= 0; --step) {
        Index t = dir == 0 ? step : T - 1 - step;
        bool first = step == 0;
        Index tp = dir == 0 ? t - 1 : t + 1;
        c_prev = first ? zero : Mat<S>(tr.c.middleCols(tp * B, B));
        if (!first) Hp.middleCols(t * B, B) = tr.h.middleCols(tp * B, B);
        const auto& m = etrace.time_mask[static_cast<std::size_t>(t)];
        dh = d_out.block(dir * H, t * B, H, B) + dh_r;
        dh_cell = (dh.array().rowwise() * m).matrix();
        dc_cell = (dc_r.array().rowwise() * m).matrix();
        Mat<S> gates = tr.gates.middleCols(t * B, B);
        Mat<S> tanh_c = tr.tanh_c.middleCols(t * B, B);
        lstm_cell_backward<S>(gates, tanh_c, c_prev, dh_cell, dc_cell, dz, dc_prev);
        dZe.middleCols(t * B, B) = dz;
        dh_r = tensor(enc_wh_[k]).transpose() * dz;
        dh_r += (dh.array().rowwise() * (S(1) - m)).matrix();
        dc_r = dc_prev + (dc_r.array().rowwise() * (S(1) - m)).matrix();
      }
      grad(enc_wx_[k]).noalias() += dZe * x.transpose();
      grad(enc_wh_[k]).noalias() += dZe * Hp.transpose();
      grad(enc_b_[k]).col(0) += dZe.rowwise().sum();
      dx.noalias() += tensor(enc_wx_[k]).transpose() * dZe;
    }
    if (etrace.drop_masks[l].size()) dx.array() *= etrace.drop_masks[l].array();
    if (l > 0) {
      d_out = std::move(dx);
    } else {
      for (Index b = 0; b < B; ++b) {
        const auto& src = etrace.padded[b];
        for (Index t = 0; t < static_cast<Index>(src.size()); ++t) {
          g_emb.col(src[t]) += dx.col(t * B + b);
        }
      }
    }
  }
  std::copy(scratch.begin(), scratch.end(), gradient.begin());
  return static_cast<S>(mean);
}

template class Seq2Seq<float>;
template class Seq2Seq<double>;

}  // namespace morph
