// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/latent.hpp"

#include <cmath>
#include <cstdio>

#include "carat/error.hpp"

CARAT_NS_BEGIN

int relabel(int modality, int label, int y, int num_labels) {
  return (modality * num_labels + label) * 2 + (y ? 1 : 0);
}

ClassTag decode_tag(int tag, int num_labels) {
  ClassTag t;
  t.polarity = (tag % 2) ? Polarity::pos : Polarity::neg;
  t.label = (tag / 2) % num_labels;
  t.modality = (tag / 2) / num_labels;
  return t;
}

std::string tag_name(const ClassTag& t) {
  return "l^" + std::string(modality_key(static_cast<std::size_t>(t.modality))) + "_{" + std::to_string(t.label) + "," +
         (t.polarity == Polarity::pos ? "pos" : "neg") + "}";
}

Tensor encode_latent(const Mlp2& encoder, const Tensor& u) { return l2_normalize(encoder(u)); }

Tensor decode_latent(const Mlp2& decoder, const Tensor& z) { return decoder(z); }

EmbeddingQueue::EmbeddingQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), storage_(capacity * dim), tag_storage_(capacity) {}

void EmbeddingQueue::push(std::span<const Real> embedding, int tag) {
  if (embedding.size() != dim_) throw InputError("EmbeddingQueue: dimension mismatch");
  if (capacity_ == 0) return;
  std::size_t slot;
  if (count_ < capacity_) {
    slot = (head_ + count_) % capacity_;
    ++count_;
  } else {
    slot = head_;
    head_ = (head_ + 1) % capacity_;
  }
  std::copy(embedding.begin(), embedding.end(), storage_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
  tag_storage_[slot] = tag;
}

void EmbeddingQueue::push_all(std::span<const Real> values, std::span<const int> tags) {
  if (values.size() != tags.size() * dim_) throw InputError("EmbeddingQueue: value/tag count mismatch");
  for (std::size_t i = 0; i < tags.size(); ++i) push(values.subspan(i * dim_, dim_), tags[i]);
}

std::vector<Real> EmbeddingQueue::values() const {
  std::vector<Real> out;
  out.reserve(count_ * dim_);
  for (std::size_t i = 0; i < count_; ++i) {
    const std::size_t slot = (head_ + i) % capacity_;
    out.insert(out.end(), storage_.begin() + static_cast<std::ptrdiff_t>(slot * dim_),
               storage_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * dim_));
  }
  return out;
}

std::vector<int> EmbeddingQueue::tags() const {
  std::vector<int> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) out.push_back(tag_storage_[(head_ + i) % capacity_]);
  return out;
}

PrototypeBank::PrototypeBank(std::size_t num_modalities, std::size_t num_labels, std::size_t dim, double phi)
    : modalities_(num_modalities), labels_(num_labels), dim_(dim), phi_(phi),
      protos_(2 * num_modalities * num_labels * dim, Real(0)) {}

void PrototypeBank::init_random(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t t = 0; t < size(); ++t) {
    std::vector<double> v(dim_);
    double sq = 0.0;
    do {
      sq = 0.0;
      for (auto& x : v) {
        x = gauss(rng);
        sq += x * x;
      }
    } while (sq < 1e-12);
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < dim_; ++k) protos_[t * dim_ + k] = static_cast<Real>(v[k] * inv);
  }
}

std::span<const Real> PrototypeBank::prototype(int tag) const {
  return std::span<const Real>(protos_).subspan(static_cast<std::size_t>(tag) * dim_, dim_);
}

std::span<Real> PrototypeBank::mutable_prototype(int tag) {
  return std::span<Real>(protos_).subspan(static_cast<std::size_t>(tag) * dim_, dim_);
}

void PrototypeBank::update(std::span<const Real> embedding, int tag) {
  if (embedding.size() != dim_) throw InputError("PrototypeBank: dimension mismatch");
  if (tag < 0 || static_cast<std::size_t>(tag) >= size()) throw InputError("PrototypeBank: tag out of range");
  auto mu = mutable_prototype(tag);
  std::vector<double> mixed(dim_);
  double sq = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) {
    mixed[k] = phi_ * static_cast<double>(mu[k]) + (1.0 - phi_) * static_cast<double>(embedding[k]);
    sq += mixed[k] * mixed[k];
  }
  const double nrm = std::sqrt(sq);
  if (!(nrm > 1e-12)) throw DegenerateVectorError("prototype update produced a zero vector");
  for (std::size_t k = 0; k < dim_; ++k) mu[k] = static_cast<Real>(mixed[k] / nrm);
}

void PrototypeBank::update_all(std::span<const Real> values, std::span<const int> tags) {
  if (values.size() != tags.size() * dim_) throw InputError("PrototypeBank: value/tag count mismatch");
  for (std::size_t i = 0; i < tags.size(); ++i) update(values.subspan(i * dim_, dim_), tags[i]);
}

Tensor scl_loss(const Tensor& anchors, std::span<const int> anchor_tags, std::span<const Real> queue_values,
                std::span<const int> queue_tags, Real tau) {
  if (!(tau > Real(0))) throw ConfigError("contrastive.tau", "temperature must be > 0");
  if (anchors.rank() != 2) throw InputError("scl_loss: anchors must be a matrix");
  const std::size_t n_anchor = anchors.dim(0), dim = anchors.dim(1);
  if (anchor_tags.size() != n_anchor) throw InputError("scl_loss: one tag per anchor required");
  if (queue_values.size() != queue_tags.size() * dim) throw InputError("scl_loss: queue shape mismatch");

  auto pool = std::make_shared<std::vector<Real>>();
  pool->reserve((n_anchor + queue_tags.size()) * dim);
  pool->insert(pool->end(), anchors.values().begin(), anchors.values().end());
  pool->insert(pool->end(), queue_values.begin(), queue_values.end());
  auto tags = std::make_shared<std::vector<int>>(anchor_tags.begin(), anchor_tags.end());
  tags->insert(tags->end(), queue_tags.begin(), queue_tags.end());

  auto rows = std::make_shared<kernels::ContrastiveRows>(kernels::contrastive_forward(*pool, *tags, n_anchor, dim, tau));
  Real total = 0;
  for (Real l : rows->loss) total += l;
  if (!std::isfinite(total)) throw NumericError("scl_loss: non-finite value");
  return make_result({}, {total}, {anchors}, [pool, tags, rows, n_anchor, dim, tau](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    kernels::contrastive_backward(*pool, *tags, n_anchor, dim, tau, *rows, self.grad[0], g);
  });
}

namespace {

void check_bank_query(const Tensor& z, const PrototypeBank& bank, int modality) {
  if (z.rank() != 2 || z.dim(1) != bank.dim() || z.dim(0) % bank.num_labels() != 0) {
    throw InputError("intrinsic: query shape " + shape_str(z.shape()) + " incompatible with the prototype bank");
  }
  if (modality < 0 || static_cast<std::size_t>(modality) >= bank.num_modalities()) {
    throw InputError("intrinsic: modality out of range");
  }
}

}  // namespace

Tensor intrinsic_soft(const Tensor& z, const PrototypeBank& bank, int modality) {
  check_bank_query(z, bank, modality);
  const std::size_t rows = z.dim(0), dim = bank.dim(), c = bank.num_labels();
  const int nl = static_cast<int>(c);
  std::vector<Real> out(rows * dim);
  auto weights = std::make_shared<std::vector<Real>>(rows * 2);
  // Snapshot the two prototypes per label; the bank may change after this call.
  auto protos = std::make_shared<std::vector<Real>>(c * 2 * dim);
  for (std::size_t j = 0; j < c; ++j) {
    for (int k = 0; k < 2; ++k) {
      const auto mu = bank.prototype(relabel(modality, static_cast<int>(j), k, nl));
      std::copy(mu.begin(), mu.end(), protos->begin() + static_cast<std::ptrdiff_t>((j * 2 + k) * dim));
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t j = r % c;
    const Real* zr = z.values().data() + r * dim;
    Real s[2];
    for (int k = 0; k < 2; ++k) {
      const Real* mu = protos->data() + (j * 2 + k) * dim;
      s[k] = 0;
      for (std::size_t q = 0; q < dim; ++q) s[k] += zr[q] * mu[q];
    }
    const Real mx = std::max(s[0], s[1]);
    const Real e0 = std::exp(s[0] - mx), e1 = std::exp(s[1] - mx);
    const Real a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    (*weights)[r * 2] = a0;
    (*weights)[r * 2 + 1] = a1;
    const Real* mu0 = protos->data() + (j * 2) * dim;
    const Real* mu1 = protos->data() + (j * 2 + 1) * dim;
    for (std::size_t q = 0; q < dim; ++q) out[r * dim + q] = a0 * mu0[q] + a1 * mu1[q];
  }
  return make_result({rows, dim}, std::move(out), {z}, [rows, dim, c, weights, protos](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t j = r % c;
      const Real* gd = self.grad.data() + r * dim;
      const Real* mu0 = protos->data() + (j * 2) * dim;
      const Real* mu1 = protos->data() + (j * 2 + 1) * dim;
      Real ga0 = 0, ga1 = 0;
      for (std::size_t q = 0; q < dim; ++q) {
        ga0 += gd[q] * mu0[q];
        ga1 += gd[q] * mu1[q];
      }
      const Real a0 = (*weights)[r * 2], a1 = (*weights)[r * 2 + 1];
      const Real avg = a0 * ga0 + a1 * ga1;
      const Real ds0 = a0 * (ga0 - avg), ds1 = a1 * (ga1 - avg);
      for (std::size_t q = 0; q < dim; ++q) g[r * dim + q] += ds0 * mu0[q] + ds1 * mu1[q];
    }
  });
}

Tensor intrinsic_hard(const Tensor& z, const PrototypeBank& bank, int modality) {
  check_bank_query(z, bank, modality);
  const std::size_t rows = z.dim(0), dim = bank.dim(), c = bank.num_labels();
  const int nl = static_cast<int>(c);
  std::vector<Real> out(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const int j = static_cast<int>(r % c);
    const auto neg = bank.prototype(relabel(modality, j, 0, nl));
    const auto pos = bank.prototype(relabel(modality, j, 1, nl));
    Real s_neg = 0, s_pos = 0;
    for (std::size_t q = 0; q < dim; ++q) {
      s_neg += z[r * dim + q] * neg[q];
      s_pos += z[r * dim + q] * pos[q];
    }
    // alpha_pos > alpha_neg exactly when s_pos > s_neg.
    const auto& pick = s_pos > s_neg ? pos : neg;
    std::copy(pick.begin(), pick.end(), out.begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  return Tensor({rows, dim}, std::move(out));
}

std::string embeddings_tsv(const TaggedEmbeddings& e, int num_labels) {
  static constexpr const char* kStageNames[] = {"o", "alpha", "beta"};
  std::string out = "sample\tmodality\tlabel\tpolarity\tstage";
  for (std::size_t k = 0; k < e.dim; ++k) out += "\tz" + std::to_string(k);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < e.size(); ++i) {
    const ClassTag t = decode_tag(e.tags[i], num_labels);
    out += std::to_string(i < e.sample_ids.size() ? e.sample_ids[i] : -1);
    out += '\t';
    out += modality_key(static_cast<std::size_t>(t.modality));
    out += '\t' + std::to_string(t.label) + '\t' + (t.polarity == Polarity::pos ? "pos" : "neg") + '\t';
    out += i < e.stages.size() ? kStageNames[e.stages[i]] : "o";
    for (std::size_t k = 0; k < e.dim; ++k) {
      std::snprintf(buf, sizeof buf, "\t%.7g", static_cast<double>(e.values[i * e.dim + k]));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

CARAT_NS_END
