#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "styleinv/graph.hpp"

namespace styleinv {

/// Named, ordered parameter tensors of a network. Non-trainable entries hold
/// buffers such as batch-norm running statistics.
template <typename T>
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
  };

  void add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw Error("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) { return entries_[lookup(name)].value; }
  const Tensor<T>& get(const std::string& name) const { return entries_[lookup(name)].value; }
  const Entry& entry(const std::string& name) const { return entries_[lookup(name)]; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.trainable);
    return out;
  }

  bool operator==(const ModelParams& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = o.entries_[i];
      if (a.name != b.name || a.trainable != b.trainable || !(a.value == b.value)) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Binds parameters into one graph, once per name, so shared weights
/// accumulate a single gradient.
template <typename T>
class ParamScope {
 public:
  ParamScope(Graph<T>& graph, ModelParams<T>& params) : graph_(graph), params_(params) {}

  Var<T> operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const auto& e = params_.entry(name);
    Var<T> v = e.trainable ? graph_.param(name, e.value) : graph_.constant(e.value);
    cache_.emplace(name, v);
    return v;
  }

  Graph<T>& graph() { return graph_; }
  ModelParams<T>& params() { return params_; }

 private:
  Graph<T>& graph_;
  ModelParams<T>& params_;
  std::map<std::string, Var<T>> cache_;
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

template <typename T>
GradMap<T> param_grads(const Gradients<T>& g) {
  GradMap<T> out;
  for (auto& [name, t] : g.for_params()) out.emplace(name, std::move(t));
  return out;
}

/// He-normal weights: N(0, 2 / fan_in).
template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> moments;  // (m, v)
};

/// One bias-corrected Adam update of every trainable parameter.
template <typename T>
void adam_step(ModelParams<T>& params, const GradMap<T>& grads, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {});

}  // namespace styleinv
