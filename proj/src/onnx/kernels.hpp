#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dendroweb/onnx/runtime.hpp"

namespace dendroweb::onnx::kernels {

struct Context {
  int opset = 13;
  const std::string* node_name = nullptr;
};

// Omitted optional inputs are passed as nullptr.
using Inputs = std::vector<const Tensor*>;
using Kernel = std::function<std::vector<Tensor>(const Inputs&, const Attributes&, const Context&)>;

const std::map<std::string, Kernel>& registry();

}  // namespace dendroweb::onnx::kernels
