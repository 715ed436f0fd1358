#include "dendroweb/neural_backend.hpp"

#include <cblas.h>

#include <cmath>
#include <mutex>
#include <string>

#include "dendroweb/errors.hpp"
#include "dendroweb/onnx/runtime.hpp"

namespace dendroweb {
namespace {

std::string dims_text(const std::vector<std::int64_t>& dims) {
  std::string s;
  for (auto d : dims) s += (s.empty() ? "" : "x") + (d < 0 ? std::string("?") : std::to_string(d));
  return s;
}

class NeuralBackend final : public Backend {
 public:
  NeuralBackend(onnx::Model model, std::string origin, bool logits)
      : model_(std::move(model)), origin_(std::move(origin)), logits_(logits) {}

  ProbabilityMap predict(const Image& tile, const TileContext&) const override {
    if (tile.channels() != 3) throw BackendError(origin_ + ": expected an RGB tile");
    const int w = tile.width();
    const int h = tile.height();
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    onnx::Tensor input = onnx::Tensor::zeros({1, 3, h, w});
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          input.f[c * plane + static_cast<std::size_t>(y) * w + x] = tile.at(x, y, c) / 255.0f;
        }
      }
    }
    const onnx::Tensor out = model_.run(input);
    if (out.dtype != onnx::DType::f32 || out.f.size() != plane || out.shape.size() < 2 ||
        out.shape[out.shape.size() - 2] != h || out.shape.back() != w) {
      throw BackendError(origin_ + ": output has shape " + dims_text(out.shape) + ", expected 1x1x" +
                         std::to_string(h) + "x" + std::to_string(w));
    }
    ProbabilityMap p(w, h, 1, 0.0f);
    auto v = p.values();
    for (std::size_t i = 0; i < plane; ++i) {
      const float z = out.f[i];
      v[i] = logits_ ? 1.0f / (1.0f + std::exp(-z)) : z;
    }
    return p;
  }

  std::string name() const override { return origin_; }

 private:
  onnx::Model model_;
  std::string origin_;
  bool logits_;
};

}  // namespace

std::unique_ptr<Backend> neural_backend(const std::filesystem::path& model_path, int tile_size) {
  static std::once_flag blas_once;
  std::call_once(blas_once, [] { openblas_set_num_threads(1); });

  const std::string origin = model_path.string();
  if (!std::filesystem::is_regular_file(model_path)) {
    throw BackendError(origin + ": model file not found");
  }
  onnx::Model model = onnx::Model::load(model_path);

  const auto act = model.metadata("output_activation");
  if (!act) throw BackendError(origin + ": metadata key 'output_activation' is missing");
  if (*act != "sigmoid_included" && *act != "logits") {
    throw BackendError(origin + ": output_activation must be 'sigmoid_included' or 'logits', got '" + *act + "'");
  }
  if (model.input_names().size() != 1) {
    throw BackendError(origin + ": expected one graph input, found " + std::to_string(model.input_names().size()));
  }
  if (auto shape = model.declared_shape(model.input_names().front())) {
    const auto& s = *shape;
    if (s.size() != 4 || (s[1] >= 0 && s[1] != 3)) {
      throw BackendError(origin + ": input shape " + dims_text(s) + " is not Nx3xHxW");
    }
    if (tile_size > 0) {
      for (int k : {2, 3}) {
        if (s[k] >= 0 && s[k] != tile_size) {
          throw BackendError(origin + ": model input is " + dims_text(s) + " but tile size is " +
                             std::to_string(tile_size));
        }
      }
    }
  }
  return std::make_unique<NeuralBackend>(std::move(model), origin, *act == "logits");
}

}  // namespace dendroweb
