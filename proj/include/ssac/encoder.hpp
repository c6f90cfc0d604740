#pragma once

#include <string>
#include <vector>

#include "ssac/ops.hpp"

namespace ssac {
inline namespace SSAC_ABI {

struct EncoderConfig {
  std::size_t p = 128;
  /// Block widths, input first: each adjacent pair is one shared-MLP block.
  std::vector<std::size_t> channels{3, 64, 64, 64, 128, 1024};
  Real bn_momentum = Real(0.1);
  Real bn_epsilon = Real(1e-5);

  void validate() const;
};

struct EncoderBlock {
  Tensor weight;  // c_in x c_out
  Tensor bias;    // c_out
  Tensor gamma;
  Tensor beta;
  BatchNormState bn;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Learnable weights and batch-norm statistics of the point encoder:
/// shared-MLP/BN/ReLU blocks, max-pool over points, then an FC projection
/// with no activation.
struct EncoderParams {
  EncoderConfig config;
  std::vector<EncoderBlock> blocks;
  Tensor fc_weight;  // last channel x p
  Tensor fc_bias;    // p
  Mode mode = Mode::Train;

  std::vector<Tensor> learnable() const;
  /// Every tensor, learnable and running statistics, in checkpoint order.
  std::vector<NamedTensor> tensors() const;
  std::size_t learnable_count() const;
  /// Deep copy with independent storage.
  EncoderParams clone() const;
};

EncoderParams encoder_init(const EncoderConfig& config, std::uint64_t seed);

/// x[B x N x 3] -> f[B x p]. Train mode updates the running statistics.
Tensor encode(EncoderParams& params, const Tensor& x);

}  // namespace SSAC_ABI
}  // namespace ssac
