#pragma once

#include <filesystem>
#include <memory>

#include "rumpl/model.hpp"

namespace rumpl {

/// Checkpoint container: the line "RUMPLCKPT", a JSON header line holding
/// the format version, the model config and the tensor table (name, rows,
/// cols), then every tensor as little-endian float64 in table order.
inline constexpr int kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::filesystem::path& path, LiftNet<S>& model);

/// Rebuilds the model from the stored config and loads every tensor. Fails
/// closed: missing, extra, misnamed or misshaped tensors throw ParseError.
template <typename S>
std::unique_ptr<LiftNet<S>> load_checkpoint(const std::filesystem::path& path);

ModelConfig read_checkpoint_config(const std::filesystem::path& path);

}  // namespace rumpl
