// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "morph/encoding.hpp"
#include "morph/random.hpp"

namespace morph {

namespace detail {
template <typename S>
struct Impl;

// Eigen picks vectorized code paths by address alignment, and different
// paths round differently. Parameters and gradients therefore live in
// 64-byte aligned storage with every tensor starting on a 64-byte boundary,
// which keeps results independent of where the buffers happen to be.
inline constexpr std::size_t kTensorAlignBytes = 64;

template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t{kTensorAlignBytes}));
  }
  void deallocate(T* p, std::size_t) {
    ::operator delete(p, std::align_val_t{kTensorAlignBytes});
  }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;
}  // namespace detail

struct ArchConfig {
  int embedding_dim = 200;
  int hidden_size = 256;
  int num_layers = 2;
  double dropout = 0.3;

  static ArchConfig small() { return {200, 256, 2, 0.3}; }
  static ArchConfig large() { return {150, 900, 2, 0.3}; }

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

// Bidirectional LSTM encoder, LSTM decoder with bilinear attention and input
// feeding, and one embedding matrix shared by the encoder input and the
// pre-softmax output layer. Parameters live in one flat buffer so optimizers
// and gradient checks can treat them as a single vector.
//
// Scalar is float for training and inference, double for gradient checks.
template <typename Scalar>
class Seq2Seq {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  struct Tensor {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::size_t offset = 0;
  };

  // Encoder output for a batch. Column t * batch + b of `memory` and `keys`
  // is source position t of batch element b.
  struct Encoded {
    int batch = 0;
    int steps = 0;
    std::vector<int> lengths;
    Matrix memory;                 // 2H x (steps * batch)
    Matrix keys;                   // H x (steps * batch), attention keys
    std::vector<Matrix> init_h;    // per decoder layer, H x batch
  };

  struct DecoderState {
    std::vector<Matrix> h;  // per layer, H x batch
    std::vector<Matrix> c;
    Matrix feed;            // previous attentional vector, H x batch
  };

  struct StepOutput {
    Matrix probs;      // vocab x batch
    Matrix attention;  // steps x batch; zero beyond each source length
  };

  struct LossOptions {
    bool training = false;               // dropout and scheduled inputs
    double teacher_forcing_prob = 1.0;   // used only when training
  };

  Seq2Seq(const ArchConfig& arch, std::size_t vocab_size, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t num_parameters() const { return params_.size(); }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }

  MatrixMap tensor(std::size_t index);
  ConstMatrixMap tensor(std::size_t index) const;
  std::size_t embedding_tensor() const { return emb_; }

  Encoded encode(std::span<const std::vector<SymbolId>> sources) const;
  DecoderState initial_state(const Encoded& encoded) const;
  StepOutput decode_step(std::span<const SymbolId> previous,
                         DecoderState& state, const Encoded& encoded) const;

  // Greedy decoding from SOS. Decoding of element b stops at EOS or once its
  // output holds max_lens[b] symbols; truncated outputs get a final EOS.
  std::vector<std::vector<SymbolId>> greedy_decode(
      std::span<const std::vector<SymbolId>> sources,
      std::span<const int> max_lens) const;
  std::vector<SymbolId> greedy_decode(const std::vector<SymbolId>& source,
                                      int max_len) const;

  // Mean cross-entropy over non-PAD target positions. When `gradient` is
  // non-empty it receives d(loss)/d(parameters) (overwritten); padding
  // between tensors gets zero. `rng` is
  // required in training mode.
  Scalar loss(std::span<const EncodedPair> batch, const LossOptions& options,
              Rng* rng, std::span<Scalar> gradient = {}) const;

  // Copies parameter values from a model of the same layout.
  template <typename Other>
  void assign_from(const Seq2Seq<Other>& other) {
    auto src = other.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) {
      params_[i] = static_cast<Scalar>(src[i]);
    }
  }

 private:
  friend struct detail::Impl<Scalar>;

  std::size_t add_tensor(std::string name, Eigen::Index rows,
                         Eigen::Index cols);
  void validate_ids(std::span<const SymbolId> ids) const;

  ArchConfig arch_;
  std::size_t vocab_size_ = 0;
  detail::AlignedVector<Scalar> params_;
  std::vector<Tensor> tensors_;

  std::size_t emb_ = 0;
  std::vector<std::size_t> enc_wx_, enc_wh_, enc_b_;  // [layer * 2 + dir]
  std::vector<std::size_t> bridge_w_, bridge_b_;       // [layer]
  std::vector<std::size_t> dec_wx_, dec_wh_, dec_b_;   // [layer]
  std::size_t att_ = 0;
  std::size_t comb_w_ = 0;
  std::size_t comb_b_ = 0;
  std::size_t proj_ = 0;
  std::size_t out_b_ = 0;
};

extern template class Seq2Seq<float>;
extern template class Seq2Seq<double>;

using Model = Seq2Seq<float>;

}  // namespace morph
