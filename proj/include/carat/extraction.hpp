// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Per-modality transformer encoders and label-wise attention.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "carat/layers.hpp"

CARAT_NS_BEGIN

struct ModalityConfig {
  std::size_t raw_dim = 0;
  std::size_t seq_len = 0;
  std::size_t layers = 1;
  std::size_t heads = 4;
  std::size_t ffn_dim = 0;
  std::size_t hidden = 0;
};

struct EncoderLayer {
  Linear query, key, value, out;
  LayerNorm attn_norm;
  Linear ffn_in, ffn_out;
  LayerNorm ffn_norm;
};

/// Input projection, sinusoidal positions, then post-norm encoder layers.
class SequenceEncoder {
 public:
  SequenceEncoder() = default;
  SequenceEncoder(ParameterSet& ps, const std::string& name, const ModalityConfig& cfg, Rng& rng);

  /// x is (batch*seq_len) x raw_dim; mask has batch*seq_len entries.
  /// Returns (batch*seq_len) x hidden. Throws InputError when a sequence has no valid position.
  Tensor operator()(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t batch) const;

  const ModalityConfig& config() const { return cfg_; }

 private:
  ModalityConfig cfg_;
  Linear input_;
  std::vector<EncoderLayer> layers_;
  std::vector<Real> positions_;  // seq_len x hidden
};

/// Fixed sinusoidal position table, seq_len x width.
std::vector<Real> sinusoidal_positions(std::size_t seq_len, std::size_t width);

/// Label-wise attention. h is (batch*seq) x d, queries is C x d. Row (b, j) of
/// the (batch*C) x d result is sum_i alpha_ij h_i with alpha_.j the softmax of
/// q_j . h_i over the valid positions of sequence b. If `weights` is given it
/// receives alpha as batch x C x seq (zeros at masked positions).
Tensor label_attention(const Tensor& h, const Tensor& queries, std::span<const std::uint8_t> mask, std::size_t batch,
                       std::size_t seq, std::vector<Real>* weights = nullptr);

CARAT_NS_END
