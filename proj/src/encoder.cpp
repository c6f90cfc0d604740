#include "ssac/encoder.hpp"

#include <cmath>

#include "ssac/errors.hpp"
#include "ssac/random.hpp"

namespace ssac {
inline namespace SSAC_ABI {

void EncoderConfig::validate() const {
  if (p < 1) throw ContractError("encoder: p must be >= 1");
  if (channels.size() < 2 || channels.front() != 3) {
    throw ContractError("encoder: channel plan must start at 3 and contain at least one block");
  }
  for (auto c : channels) {
    if (c == 0) throw ContractError("encoder: zero-width block");
  }
  if (!(bn_momentum > 0 && bn_momentum <= 1) || !(bn_epsilon > 0)) {
    throw ContractError("encoder: invalid batch-norm momentum/epsilon");
  }
}

namespace {

Tensor fan_in_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(1.0 / double(fan_in));
  std::vector<Real> w(fan_in * fan_out);
  for (auto& v : w) v = static_cast<Real>(uniform(rng, -bound, bound));
  return Tensor::from_data({fan_in, fan_out}, std::move(w), true);
}

}  // namespace

EncoderParams encoder_init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  EncoderParams params;
  params.config = config;
  for (std::size_t i = 0; i + 1 < config.channels.size(); ++i) {
    const std::size_t cin = config.channels[i], cout = config.channels[i + 1];
    EncoderBlock block;
    block.weight = fan_in_uniform(cin, cout, rng);
    block.bias = Tensor::zeros({cout}, true);
    block.gamma = Tensor::full({cout}, Real(1), true);
    block.beta = Tensor::zeros({cout}, true);
    block.bn = BatchNormState{Tensor::zeros({cout}), Tensor::full({cout}, Real(1)), config.bn_momentum,
                              config.bn_epsilon};
    params.blocks.push_back(std::move(block));
  }
  params.fc_weight = fan_in_uniform(config.channels.back(), config.p, rng);
  params.fc_bias = Tensor::zeros({config.p}, true);
  return params;
}

std::vector<Tensor> EncoderParams::learnable() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks) {
    out.push_back(b.weight);
    out.push_back(b.bias);
    out.push_back(b.gamma);
    out.push_back(b.beta);
  }
  out.push_back(fc_weight);
  out.push_back(fc_bias);
  return out;
}

std::vector<NamedTensor> EncoderParams::tensors() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto prefix = "encoder.block" + std::to_string(i) + ".";
    const auto& b = blocks[i];
    out.push_back({prefix + "weight", b.weight});
    out.push_back({prefix + "bias", b.bias});
    out.push_back({prefix + "gamma", b.gamma});
    out.push_back({prefix + "beta", b.beta});
  }
  out.push_back({"encoder.fc.weight", fc_weight});
  out.push_back({"encoder.fc.bias", fc_bias});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto prefix = "encoder.block" + std::to_string(i) + ".";
    out.push_back({prefix + "running_mean", blocks[i].bn.running_mean});
    out.push_back({prefix + "running_var", blocks[i].bn.running_var});
  }
  return out;
}

std::size_t EncoderParams::learnable_count() const {
  std::size_t n = 0;
  for (const auto& t : learnable()) n += t.numel();
  return n;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams c;
  c.config = config;
  c.mode = mode;
  for (const auto& b : blocks) {
    EncoderBlock nb;
    nb.weight = b.weight.detach(true);
    nb.bias = b.bias.detach(true);
    nb.gamma = b.gamma.detach(true);
    nb.beta = b.beta.detach(true);
    nb.bn = BatchNormState{b.bn.running_mean.detach(), b.bn.running_var.detach(), b.bn.momentum, b.bn.epsilon};
    c.blocks.push_back(std::move(nb));
  }
  c.fc_weight = fc_weight.detach(true);
  c.fc_bias = fc_bias.detach(true);
  return c;
}

Tensor encode(EncoderParams& params, const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) != 3) throw DimensionError("encode: expected B x N x 3 points, got " + shape_str(x.shape()));
  Tensor h = x;
  for (auto& block : params.blocks) {
    h = relu(batchnorm(shared_mlp(h, block.weight, block.bias), block.gamma, block.beta, block.bn, params.mode));
  }
  return add_bias(matmul(maxpool_points(h), params.fc_weight), params.fc_bias);
}

}  // namespace SSAC_ABI
}  // namespace ssac
