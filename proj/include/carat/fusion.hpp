// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Two-level cross-modal reconstruction, the reconstruction loss, per-modality
// label heads with max-pooling over modalities, and the stage-wise loss.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "carat/layers.hpp"
#include "carat/modality.hpp"

CARAT_NS_BEGIN

/// One tensor per modality in (t, v, a) order. Each is (batch*C) x d with
/// rows in (sample, label) order.
using ModalityTriple = std::array<Tensor, kNumModalities>;

/// f^{va2t}, f^{ta2v}, f^{tv2a}: 3d -> d -> d, shared by both levels.
struct ReconstructionNets {
  std::array<Mlp2, kNumModalities> f;

  static ReconstructionNets create(ParameterSet& ps, const std::string& name, std::size_t d, Rng& rng);
};

/// U^m_alpha = f_m of the (t; v; a) concatenation of u_tilde with slot m
/// replaced by d_tilde[m].
ModalityTriple reconstruct_first_level(const ReconstructionNets& nets, const ModalityTriple& u_tilde,
                                       const ModalityTriple& d_tilde);

/// U^m_beta = f_m([U^t_alpha; U^v_alpha; U^a_alpha]).
ModalityTriple reconstruct_second_level(const ReconstructionNets& nets, const ModalityTriple& u_alpha);

/// Sum over modalities of ||U_o - U~_o||_F + ||U_o - U_alpha||_F, with norms
/// taken per sample and averaged over the batch. Undefined u_tilde entries
/// drop the first term. `squared` switches to squared norms.
Tensor reconstruction_loss(const ModalityTriple& u_o, const ModalityTriple& u_tilde, const ModalityTriple& u_alpha,
                           std::size_t batch, bool squared = false);

/// logit_{b,j} = w_j . u_{b,j} + b_j for u of shape (batch*C) x d, w of C x d.
Tensor label_linear(const Tensor& u, const Tensor& w, const Tensor& bias);

struct ModalityHeads {
  std::array<Tensor, kNumModalities> w;  // C x d
  std::array<Tensor, kNumModalities> b;  // C

  static ModalityHeads create(ParameterSet& ps, const std::string& name, std::size_t num_labels, std::size_t d,
                              Rng& rng);
  /// batch x C logits of modality m.
  Tensor logits(std::size_t m, const Tensor& u) const;
};

struct MaxPrediction {
  Tensor scores;            // batch x C
  std::vector<int> argmax;  // batch x C, winning modality per cell
};

/// s = max over modalities of the head logits; ties pick the lowest modality.
MaxPrediction modality_max_predict(const ModalityTriple& u, const ModalityHeads& heads, std::size_t batch);

/// g_o*BCE(s_o) + g_alpha*BCE(s_alpha) + g_beta*BCE(s_beta).
Tensor lsr_loss(const Tensor& s_o, const Tensor& s_alpha, const Tensor& s_beta, std::span<const Real> targets,
                double gamma_o, double gamma_alpha, double gamma_beta);

CARAT_NS_END
