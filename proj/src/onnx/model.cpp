#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dendroweb/errors.hpp"
#include "dendroweb/onnx/runtime.hpp"
#include "kernels.hpp"
#include "onnx_subset.pb.h"

namespace dendroweb::onnx {

Tensor Tensor::floats(std::vector<std::int64_t> shape, std::vector<float> data) {
  Tensor t;
  t.shape = std::move(shape);
  t.dtype = DType::f32;
  t.f = std::move(data);
  if (t.f.size() != t.size()) throw std::invalid_argument("Tensor: data length does not match shape");
  return t;
}

Tensor Tensor::ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
  Tensor t;
  t.shape = std::move(shape);
  t.dtype = DType::i64;
  t.i = std::move(data);
  if (t.i.size() != t.size()) throw std::invalid_argument("Tensor: data length does not match shape");
  return t;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.f.assign(t.size(), 0.0f);
  return t;
}

std::size_t Tensor::size() const {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return static_cast<std::size_t>(n);
}

namespace {

namespace pb = dendroweb::onnx::proto;

template <class T>
std::vector<T> unpack_raw(const std::string& raw, std::size_t count, const std::string& what) {
  if (raw.size() != count * sizeof(T)) throw BackendError(what + ": raw data length does not match shape");
  std::vector<T> out(count);
  if (count) std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

template <class T, class Src>
std::vector<std::int64_t> widen(const Src& src) {
  std::vector<std::int64_t> out;
  out.reserve(src.size());
  for (auto v : src) out.push_back(static_cast<std::int64_t>(v));
  return out;
}

Tensor from_proto(const pb::TensorProto& tp, const std::string& what) {
  Tensor t;
  t.shape.assign(tp.dims().begin(), tp.dims().end());
  const std::size_t n = t.size();
  const bool raw = tp.has_raw_data();
  const std::string& bytes = tp.raw_data();
  switch (tp.data_type()) {
    case pb::TensorProto::FLOAT:
      t.dtype = DType::f32;
      t.f = raw ? unpack_raw<float>(bytes, n, what) : std::vector<float>(tp.float_data().begin(), tp.float_data().end());
      break;
    case pb::TensorProto::DOUBLE: {
      t.dtype = DType::f32;
      const auto d = raw ? unpack_raw<double>(bytes, n, what)
                         : std::vector<double>(tp.double_data().begin(), tp.double_data().end());
      t.f.assign(d.begin(), d.end());
      break;
    }
    case pb::TensorProto::INT64:
      t.dtype = DType::i64;
      t.i = raw ? unpack_raw<std::int64_t>(bytes, n, what)
                : std::vector<std::int64_t>(tp.int64_data().begin(), tp.int64_data().end());
      break;
    case pb::TensorProto::INT32:
      t.dtype = DType::i64;
      t.i = raw ? widen<std::int64_t>(unpack_raw<std::int32_t>(bytes, n, what)) : widen<std::int64_t>(tp.int32_data());
      break;
    case pb::TensorProto::INT16:
      t.dtype = DType::i64;
      t.i = raw ? widen<std::int64_t>(unpack_raw<std::int16_t>(bytes, n, what)) : widen<std::int64_t>(tp.int32_data());
      break;
    case pb::TensorProto::UINT16:
      t.dtype = DType::i64;
      t.i = raw ? widen<std::int64_t>(unpack_raw<std::uint16_t>(bytes, n, what)) : widen<std::int64_t>(tp.int32_data());
      break;
    case pb::TensorProto::INT8:
      t.dtype = DType::i64;
      t.i = raw ? widen<std::int64_t>(unpack_raw<std::int8_t>(bytes, n, what)) : widen<std::int64_t>(tp.int32_data());
      break;
    case pb::TensorProto::UINT8:
    case pb::TensorProto::BOOL:
      t.dtype = DType::i64;
      t.i = raw ? widen<std::int64_t>(unpack_raw<std::uint8_t>(bytes, n, what)) : widen<std::int64_t>(tp.int32_data());
      break;
    default:
      throw BackendError(what + ": unsupported tensor data type " + std::to_string(tp.data_type()));
  }
  const std::size_t have = t.dtype == DType::f32 ? t.f.size() : t.i.size();
  if (have != n) {
    throw BackendError(what + ": holds " + std::to_string(have) + " values for " + std::to_string(n) +
                       " elements");
  }
  return t;
}

Attributes from_proto(const google::protobuf::RepeatedPtrField<pb::AttributeProto>& attrs, const std::string& what) {
  Attributes out;
  for (const auto& a : attrs) {
    Attribute v;
    if (a.has_f()) v.f = a.f();
    if (a.has_i()) v.i = a.i();
    if (a.has_s()) v.s = a.s();
    if (a.has_t()) v.t = from_proto(a.t(), what + " attribute '" + a.name() + "'");
    v.floats.assign(a.floats().begin(), a.floats().end());
    v.ints.assign(a.ints().begin(), a.ints().end());
    out[a.name()] = std::move(v);
  }
  return out;
}

std::optional<std::vector<std::int64_t>> shape_of(const pb::ValueInfoProto& vi) {
  if (!vi.has_type() || !vi.type().has_tensor_type() || !vi.type().tensor_type().has_shape()) return std::nullopt;
  std::vector<std::int64_t> dims;
  for (const auto& d : vi.type().tensor_type().shape().dim()) {
    dims.push_back(d.has_dim_value() && d.dim_value() > 0 ? d.dim_value() : -1);
  }
  return dims;
}

}  // namespace

struct Model::Impl {
  struct Node {
    std::string op;
    std::string name;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    Attributes attrs;
    const kernels::Kernel* kernel = nullptr;
  };

  std::string origin;
  int opset = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, std::vector<std::int64_t>> shapes;
  std::map<std::string, int> elem_types;
  std::map<std::string, std::string> metadata;
  std::unordered_map<std::string, Tensor> initializers;
  std::vector<Node> nodes;
  std::unordered_map<std::string, std::size_t> last_use;
};

Model::Model(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

Model Model::parse(const std::string& bytes, const std::string& origin) {
  pb::ModelProto mp;
  if (bytes.empty() || !mp.ParseFromString(bytes) || !mp.has_graph()) {
    throw BackendError(origin + ": not a valid ONNX model");
  }
  auto impl = std::make_unique<Impl>();
  impl->origin = origin;
  for (const auto& os : mp.opset_import()) {
    if (os.domain().empty() || os.domain() == "ai.onnx") impl->opset = static_cast<int>(os.version());
  }
  if (impl->opset == 0) impl->opset = 13;
  for (const auto& kv : mp.metadata_props()) impl->metadata[kv.key()] = kv.value();

  const auto& g = mp.graph();
  std::set<std::string> defined;
  for (const auto& init : g.initializer()) {
    impl->initializers.emplace(init.name(), from_proto(init, origin + ": initializer '" + init.name() + "'"));
    defined.insert(init.name());
  }
  for (const auto& vi : g.input()) {
    if (impl->initializers.count(vi.name())) continue;
    impl->inputs.push_back(vi.name());
    defined.insert(vi.name());
    if (auto s = shape_of(vi)) impl->shapes[vi.name()] = *s;
    if (vi.has_type() && vi.type().has_tensor_type()) impl->elem_types[vi.name()] = vi.type().tensor_type().elem_type();
  }
  for (const auto& vi : g.output()) {
    impl->outputs.push_back(vi.name());
    if (auto s = shape_of(vi)) impl->shapes[vi.name()] = *s;
  }
  if (impl->outputs.empty()) throw BackendError(origin + ": graph declares no outputs");

  const auto& table = kernels::registry();
  for (const auto& np : g.node()) {
    Impl::Node node;
    node.op = np.op_type();
    node.name = np.name().empty() ? node.op : np.name();
    const std::string where = origin + ": node '" + node.name + "'";
    if (!np.domain().empty() && np.domain() != "ai.onnx") {
      throw BackendError(origin + ": unsupported operator '" + np.domain() + "::" + node.op + "' (node '" +
                         node.name + "')");
    }
    auto it = table.find(node.op);
    if (it == table.end()) {
      throw BackendError(origin + ": unsupported operator '" + node.op + "' (node '" + node.name + "')");
    }
    node.kernel = &it->second;
    node.inputs.assign(np.input().begin(), np.input().end());
    node.outputs.assign(np.output().begin(), np.output().end());
    node.attrs = from_proto(np.attribute(), where);
    for (const auto& name : node.inputs) {
      if (name.empty()) continue;
      if (!defined.count(name)) throw BackendError(where + ": input '" + name + "' is not defined before use");
      impl->last_use[name] = impl->nodes.size();
    }
    for (const auto& name : node.outputs) {
      if (!name.empty()) defined.insert(name);
    }
    impl->nodes.push_back(std::move(node));
  }
  for (const auto& name : impl->outputs) {
    if (!defined.count(name)) throw BackendError(origin + ": output '" + name + "' is never produced");
  }
  return Model(std::move(impl));
}

const std::vector<std::string>& Model::input_names() const { return impl_->inputs; }
const std::vector<std::string>& Model::output_names() const { return impl_->outputs; }
int Model::opset() const { return impl_->opset; }

std::optional<std::vector<std::int64_t>> Model::declared_shape(const std::string& name) const {
  auto it = impl_->shapes.find(name);
  if (it == impl_->shapes.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Model::metadata(const std::string& key) const {
  auto it = impl_->metadata.find(key);
  if (it == impl_->metadata.end()) return std::nullopt;
  return it->second;
}

std::vector<Tensor> Model::run(const std::map<std::string, Tensor>& feeds) const {
  const Impl& m = *impl_;
  std::unordered_map<std::string, Tensor> values;
  for (const auto& name : m.inputs) {
    auto it = feeds.find(name);
    if (it == feeds.end()) throw BackendError(m.origin + ": missing input '" + name + "'");
    const Tensor& t = it->second;
    if (t.dtype == DType::f32 ? t.f.size() != t.size() : t.i.size() != t.size()) {
      throw BackendError(m.origin + ": input '" + name + "' data length does not match its shape");
    }
    if (auto et = m.elem_types.find(name); et != m.elem_types.end() && et->second == 1 && t.dtype != DType::f32) {
      throw BackendError(m.origin + ": input '" + name + "' must be float");
    }
    if (auto s = m.shapes.find(name); s != m.shapes.end()) {
      const auto& want = s->second;
      bool ok = want.size() == t.shape.size();
      for (std::size_t k = 0; ok && k < want.size(); ++k) ok = want[k] < 0 || want[k] == t.shape[k];
      if (!ok) {
        std::string got, exp;
        for (auto d : t.shape) got += (got.empty() ? "" : "x") + std::to_string(d);
        for (auto d : want) exp += (exp.empty() ? "" : "x") + (d < 0 ? std::string("?") : std::to_string(d));
        throw BackendError(m.origin + ": input '" + name + "' has shape " + got + ", model expects " + exp);
      }
    }
    values[name] = t;
  }
  const std::set<std::string> keep(m.outputs.begin(), m.outputs.end());
  auto lookup = [&](const std::string& name) -> const Tensor* {
    if (auto it = values.find(name); it != values.end()) return &it->second;
    if (auto it = m.initializers.find(name); it != m.initializers.end()) return &it->second;
    return nullptr;
  };

  kernels::Context ctx;
  ctx.opset = m.opset;
  for (std::size_t k = 0; k < m.nodes.size(); ++k) {
    const auto& node = m.nodes[k];
    kernels::Inputs args;
    for (const auto& name : node.inputs) args.push_back(name.empty() ? nullptr : lookup(name));
    ctx.node_name = &node.name;
    std::vector<Tensor> results;
    try {
      results = (*node.kernel)(args, node.attrs, ctx);
    } catch (const BackendError& e) {
      throw BackendError(m.origin + ": node '" + node.name + "': " + e.what());
    }
    for (std::size_t o = 0; o < node.outputs.size() && o < results.size(); ++o) {
      if (!node.outputs[o].empty()) values[node.outputs[o]] = std::move(results[o]);
    }
    for (const auto& name : node.inputs) {
      auto lu = m.last_use.find(name);
      if (lu != m.last_use.end() && lu->second == k && !keep.count(name)) values.erase(name);
    }
  }
  std::vector<Tensor> out;
  for (const auto& name : m.outputs) {
    const Tensor* t = lookup(name);
    if (!t) throw BackendError(m.origin + ": output '" + name + "' was not computed");
    out.push_back(*t);
  }
  return out;
}

Tensor Model::run(const Tensor& input) const {
  if (impl_->inputs.size() != 1) {
    throw BackendError(impl_->origin + ": expected exactly one graph input, found " +
                       std::to_string(impl_->inputs.size()));
  }
  return run(std::map<std::string, Tensor>{{impl_->inputs.front(), input}}).front();
}

const std::vector<std::string>& Model::supported_ops() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, fn] : kernels::registry()) v.push_back(k);
    return v;
  }();
  return names;
}

}  // namespace dendroweb::onnx
