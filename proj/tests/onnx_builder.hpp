#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dendroweb/onnx/runtime.hpp"
#include "onnx_subset.pb.h"

namespace testing_support {

namespace pb = dendroweb::onnx::proto;
using dendroweb::onnx::Model;

using Dims = std::vector<std::int64_t>;

/// Assembles a single-graph model; -1 in a declared shape becomes a named
/// symbolic dimension.
class GraphBuilder {
 public:
  explicit GraphBuilder(int opset = 13) {
    model_.set_ir_version(7);
    auto* op = model_.add_opset_import();
    op->set_domain("");
    op->set_version(opset);
    graph_ = model_.mutable_graph();
    graph_->set_name("test");
  }

  void input(const std::string& name, const Dims& dims) { value(graph_->add_input(), name, dims); }
  void output(const std::string& name, const Dims& dims) { value(graph_->add_output(), name, dims); }

  void init(const std::string& name, const Dims& dims, const std::vector<float>& data) {
    auto* t = graph_->add_initializer();
    t->set_name(name);
    t->set_data_type(pb::TensorProto::FLOAT);
    for (auto d : dims) t->add_dims(d);
    for (float v : data) t->add_float_data(v);
  }

  void init_raw(const std::string& name, const Dims& dims, const std::vector<float>& data) {
    auto* t = graph_->add_initializer();
    t->set_name(name);
    t->set_data_type(pb::TensorProto::FLOAT);
    for (auto d : dims) t->add_dims(d);
    t->set_raw_data(std::string(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float)));
  }

  pb::NodeProto* node(const std::string& op, const std::vector<std::string>& ins,
                      const std::vector<std::string>& outs) {
    auto* n = graph_->add_node();
    n->set_op_type(op);
    n->set_name(op + "_" + std::to_string(graph_->node_size()));
    for (const auto& i : ins) n->add_input(i);
    for (const auto& o : outs) n->add_output(o);
    return n;
  }

  static void attr(pb::NodeProto* n, const std::string& name, std::int64_t v) {
    auto* a = n->add_attribute();
    a->set_name(name);
    a->set_type(pb::AttributeProto::INT);
    a->set_i(v);
  }
  static void attr(pb::NodeProto* n, const std::string& name, float v) {
    auto* a = n->add_attribute();
    a->set_name(name);
    a->set_type(pb::AttributeProto::FLOAT);
    a->set_f(v);
  }
  static void attr(pb::NodeProto* n, const std::string& name, const std::string& v) {
    auto* a = n->add_attribute();
    a->set_name(name);
    a->set_type(pb::AttributeProto::STRING);
    a->set_s(v);
  }
  static void attr(pb::NodeProto* n, const std::string& name, const Dims& v) {
    auto* a = n->add_attribute();
    a->set_name(name);
    a->set_type(pb::AttributeProto::INTS);
    for (auto x : v) a->add_ints(x);
  }

  void meta(const std::string& key, const std::string& value) {
    auto* m = model_.add_metadata_props();
    m->set_key(key);
    m->set_value(value);
  }

  std::string bytes() const { return model_.SerializeAsString(); }
  Model build() const { return Model::parse(bytes(), "test.onnx"); }
  void save(const std::filesystem::path& p) const { std::ofstream(p, std::ios::binary) << bytes(); }

 private:
  static void value(pb::ValueInfoProto* v, const std::string& name, const Dims& dims) {
    v->set_name(name);
    auto* tt = v->mutable_type()->mutable_tensor_type();
    tt->set_elem_type(pb::TensorProto::FLOAT);
    auto* shape = tt->mutable_shape();
    for (auto d : dims) {
      auto* dim = shape->add_dim();
      if (d < 0) dim->set_dim_param("d" + std::to_string(shape->dim_size()));
      else dim->set_dim_value(d);
    }
  }

  pb::ModelProto model_;
  pb::GraphProto* graph_;
};

// 3 -> 1 channel 1x1 convolution with the given weights, plus optional sigmoid.
inline GraphBuilder pointwise_model(const std::vector<float>& w, const std::string& activation, Dims in_dims) {
  GraphBuilder gb;
  gb.input("image", in_dims);
  gb.init("w", {1, 3, 1, 1}, w);
  gb.init("b", {1}, {0.0f});
  gb.node("Conv", {"image", "w", "b"}, {"out"});
  gb.output("out", {1, 1, in_dims[2], in_dims[3]});
  if (!activation.empty()) gb.meta("output_activation", activation);
  return gb;
}

}  // namespace testing_support
