#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dendroweb::onnx {

enum class DType { f32, i64 };

/// Dense row-major tensor holding either 32-bit floats or 64-bit integers.
struct Tensor {
  std::vector<std::int64_t> shape;
  DType dtype = DType::f32;
  std::vector<float> f;
  std::vector<std::int64_t> i;

  static Tensor floats(std::vector<std::int64_t> shape, std::vector<float> data);
  static Tensor ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data);
  static Tensor zeros(std::vector<std::int64_t> shape);

  std::size_t size() const;  // element count implied by shape
  std::size_t rank() const noexcept { return shape.size(); }
};

/// Attribute value of a graph node.
struct Attribute {
  std::optional<float> f;
  std::optional<std::int64_t> i;
  std::optional<std::string> s;
  std::optional<Tensor> t;
  std::vector<float> floats;
  std::vector<std::int64_t> ints;
};

using Attributes = std::map<std::string, Attribute>;

/// CPU interpreter for a feed-forward ONNX graph.
///
/// Loading validates that every node uses a supported operator and consumes
/// only values defined earlier. run() is const and may be called from
/// several threads at once.
class Model {
 public:
  static Model load(const std::filesystem::path& path);
  static Model parse(const std::string& bytes, const std::string& origin);

  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  /// Graph inputs that are not initializers, in declaration order.
  const std::vector<std::string>& input_names() const;
  const std::vector<std::string>& output_names() const;
  /// Declared shape of an input or output; -1 marks a symbolic dimension.
  std::optional<std::vector<std::int64_t>> declared_shape(const std::string& name) const;
  std::optional<std::string> metadata(const std::string& key) const;
  int opset() const;

  std::vector<Tensor> run(const std::map<std::string, Tensor>& feeds) const;
  /// Single-input, first-output convenience form.
  Tensor run(const Tensor& input) const;

  static const std::vector<std::string>& supported_ops();

 private:
  struct Impl;
  explicit Model(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace dendroweb::onnx
