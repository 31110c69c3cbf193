#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"
#include "tensor.hpp"

namespace est {

// Bias-free ReLU attention model. One block is:
//   Q = relu(x Wq)   K = relu(x Wk)   V = relu(x Wv)          (n_tokens x d_head)
//   A = relu((Q K^T) / d_head)                                (n_tokens x n_tokens)
//   ctx = relu((A V) Wo)                                      (n_tokens x d_model)
//   r1 = x + ctx
//   m1 = relu(r1 Wmlp1)   m2 = relu(m1 Wmlp2)   r2 = r1 + m2
// After the last block: pooled = token mean of r2, logits = pooled Wcls.
// The scale on the attention scores is d_head itself, not its square root.

struct AnnDims {
  int n_tokens = 0;
  int d_model = 0;
  int d_head = 0;
  int d_ff = 0;
  int n_blocks = 1;
  int n_classes = 0;
  void validate() const;
};

struct BlockWeights {
  Tensor w_q, w_k, w_v;  // d_model x d_head
  Tensor w_o;            // d_head x d_model
  Tensor w_mlp1;         // d_model x d_ff
  Tensor w_mlp2;         // d_ff x d_model
};

struct AnnParams {
  AnnDims dims;
  std::vector<BlockWeights> blocks;
  Tensor w_cls;  // d_model x n_classes

  void validate() const;
  // Cheap content hash used to detect a cache built against different weights.
  uint64_t fingerprint() const;
};

struct BlockCache {
  Tensor x_in;
  Tensor q_pre, q, k_pre, k, v_pre, v;
  Tensor a_pre, a, av;
  Tensor ctx_pre, ctx;
  Tensor r1, m1_pre, m1, m2_pre, m2, r2;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Tensor pooled;  // 1 x d_model
  Tensor logits;  // 1 x n_classes
  uint64_t params_fingerprint = 0;
};

struct AnnGrads {
  std::vector<BlockWeights> blocks;
  Tensor w_cls;
};

AnnParams ann_init(const AnnDims& dims, uint64_t seed);

// x is n_tokens x d_model. Returns 1 x n_classes logits; fills cache if given.
Tensor ann_forward(const AnnParams& p, const Tensor& x, ForwardCache* cache = nullptr);

// grad_logits is dLoss/dlogits (1 x n_classes) for the forward pass that
// produced the cache. The cache must come from these exact params.
AnnGrads ann_backward(const AnnParams& p, const ForwardCache& cache, const Tensor& grad_logits);

// Softmax cross-entropy for one sample; optionally writes dLoss/dlogits.
double softmax_cross_entropy(const Tensor& logits, int label, Tensor* grad_logits = nullptr);

struct TrainResult {
  double final_loss = 0.0;       // mean loss over the last epoch (pre-update weights)
  double final_accuracy = 0.0;   // training accuracy after the last update
  std::vector<double> epoch_losses;
};

// Full-batch gradient descent: per epoch, gradients are averaged over all
// samples (visited in a seed-shuffled order, which fixes the floating-point
// summation order) and one update is applied. A non-finite loss aborts with
// a divergence error naming the epoch.
TrainResult train_sgd(AnnParams& p, const Dataset& data, int epochs, double lr, uint64_t seed);

double ann_accuracy(const AnnParams& p, const Dataset& data);

}  // namespace est
