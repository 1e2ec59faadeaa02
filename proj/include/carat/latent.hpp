// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Latent encode/decode, class tags, the embedding queue, prototypes, the
// supervised contrastive loss and intrinsic vectors.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "carat/kernels.hpp"
#include "carat/layers.hpp"
#include "carat/modality.hpp"

CARAT_NS_BEGIN

enum class Stage : int { o = 0, alpha = 1, beta = 2 };
inline constexpr std::size_t kNumStages = 3;

enum class Polarity : int { neg = 0, pos = 1 };

/// Class tag l^m_{j,k}: modality, label and polarity.
struct ClassTag {
  int modality = 0;
  int label = 0;
  Polarity polarity = Polarity::neg;

  bool operator==(const ClassTag&) const = default;
};

/// Dense tag id in [0, 2 * M * C).
int relabel(int modality, int label, int y, int num_labels);
ClassTag decode_tag(int tag, int num_labels);
std::string tag_name(const ClassTag& t);

/// Encoder rows are L2-normalized (DegenerateVectorError on a zero row).
Tensor encode_latent(const Mlp2& encoder, const Tensor& u);
Tensor decode_latent(const Mlp2& decoder, const Tensor& z);

/// FIFO of gradient-free embeddings with their tags; oldest evicted first.
class EmbeddingQueue {
 public:
  EmbeddingQueue() = default;
  EmbeddingQueue(std::size_t capacity, std::size_t dim);

  void push(std::span<const Real> embedding, int tag);
  /// Appends `tags.size()` rows of `values` in order.
  void push_all(std::span<const Real> values, std::span<const int> tags);

  std::size_t size() const { return count_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }

  /// Entries oldest to newest.
  std::vector<Real> values() const;
  std::vector<int> tags() const;
  void clear() { count_ = 0; head_ = 0; }

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_ = 0;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::size_t count_ = 0;
  std::vector<Real> storage_;
  std::vector<int> tag_storage_;
};

/// Momentum prototypes mu^m_{j,k}, one unit vector per class tag.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(std::size_t num_modalities, std::size_t num_labels, std::size_t dim, double phi);

  /// Seeded random unit vectors.
  void init_random(Rng& rng);

  /// mu <- normalize(phi * mu + (1 - phi) * e) for the prototype of `tag`.
  void update(std::span<const Real> embedding, int tag);
  void update_all(std::span<const Real> values, std::span<const int> tags);

  std::span<const Real> prototype(int tag) const;
  std::span<Real> mutable_prototype(int tag);
  std::span<const Real> data() const { return protos_; }
  std::span<Real> mutable_data() { return protos_; }

  std::size_t num_modalities() const { return modalities_; }
  std::size_t num_labels() const { return labels_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return 2 * modalities_ * labels_; }
  double phi() const { return phi_; }

 private:
  std::size_t modalities_ = 0;
  std::size_t labels_ = 0;
  std::size_t dim_ = 0;
  double phi_ = 0.99;
  std::vector<Real> protos_;
};

/// Supervised contrastive loss summed over anchors. Anchors are the rows of
/// `anchors`; the pool is anchors plus the queue snapshot. Positives share the
/// anchor's tag; anchors without positives contribute 0. Queue rows are
/// constants. Throws ConfigError when tau <= 0.
Tensor scl_loss(const Tensor& anchors, std::span<const int> anchor_tags, std::span<const Real> queue_values,
                std::span<const int> queue_tags, Real tau);

/// Soft intrinsic vectors for modality m. Row b*C + j of z (B*C x d_z) mixes
/// mu^m_{j,pos} and mu^m_{j,neg} by the softmax of their similarities with the row.
Tensor intrinsic_soft(const Tensor& z, const PrototypeBank& bank, int modality);

/// Hard variant: the prototype with the larger weight; a tie picks neg.
Tensor intrinsic_hard(const Tensor& z, const PrototypeBank& bank, int modality);

/// Detached embeddings with tags, as used for queue and prototype updates.
struct TaggedEmbeddings {
  std::size_t dim = 0;
  std::vector<Real> values;
  std::vector<int> tags;
  /// Parallel metadata for export.
  std::vector<std::int64_t> sample_ids;
  std::vector<std::uint8_t> stages;

  std::size_t size() const { return tags.size(); }
};

/// TSV: sample, modality, label, polarity, stage, then dim values.
std::string embeddings_tsv(const TaggedEmbeddings& e, int num_labels);

CARAT_NS_END
