#pragma once

#include <filesystem>
#include <memory>

#include "dendroweb/backend.hpp"

namespace dendroweb {

/// Backend running an ONNX segmentation graph.
///
/// The graph takes one float NCHW input with 3 channels (RGB scaled to
/// [0,1]) and emits one single-channel map of the same height and width.
/// Model metadata key "output_activation" must be "sigmoid_included" or
/// "logits"; logits are passed through the logistic function. With a
/// nonzero tile_size, fixed spatial input dimensions must equal it.
/// Throws BackendError naming the file on any violation.
std::unique_ptr<Backend> neural_backend(const std::filesystem::path& model_path, int tile_size);

}  // namespace dendroweb
