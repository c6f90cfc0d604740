#pragma once

#include <string>

#include "ssac/trainer.hpp"

namespace ssac {
inline namespace SSAC_ABI {

/// File layout:
///   "SSAC1\n"
///   "header_bytes <n>\n"
///   n bytes of key = value text: config snapshot, head kind, class count,
///   validation metrics, then one "tensor = <name> <shape> <offset>" line per
///   tensor (shape as d0xd1, offset in bytes into the payload)
///   payload: little-endian float32 values, tensors in directory order
///   (encoder parameters, running statistics, then the head).
inline constexpr const char* kCheckpointMagic = "SSAC1\n";

std::string checkpoint_bytes(const TrainedModel& model);
TrainedModel parse_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const TrainedModel& model);
/// The magic is checked on the first 6 bytes before the rest of the file is
/// read.
TrainedModel load_checkpoint(const std::string& path);

/// Every tensor of the model in checkpoint order.
std::vector<NamedTensor> model_tensors(const Model& model);

}  // namespace SSAC_ABI
}  // namespace ssac
