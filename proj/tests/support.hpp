#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "sktune/error.hpp"
#include "sktune/peft.hpp"
#include "sktune/tensor.hpp"

namespace sktune::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double bound = 3.0) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(numel_of(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

inline std::vector<int> random_ids(std::size_t n, std::size_t vocab, std::mt19937_64& rng) {
  std::vector<int> ids(n);
  for (int& id : ids) id = static_cast<int>(rng() % vocab);
  return ids;
}

template <class F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an sktune::Error";
  return ErrorKind::InvalidArgument;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data(), y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Closed-form parameter counts, written out independently of any enumeration.
inline std::size_t model_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ffn;
  const std::size_t block = 4 * d * d + 4 * d + d * f + f + f * d + d;
  return c.vocab_size * d + c.max_seq * d + c.n_layers * block + 2 * d;
}

inline std::size_t symbolic_count(MethodKind kind, const ModelConfig& c, const MethodOptions& o) {
  const std::size_t d = c.d_model, m = c.n_layers, f = c.d_ffn, nv = o.n_virtual;
  const std::size_t head = d * o.num_classes + o.num_classes;
  switch (kind) {
    case MethodKind::FullFT: return model_count(c) + head;
    case MethodKind::PromptVirtual: return nv * d + head;
    case MethodKind::PrefixVirtual: return nv * d + d * f + f + f * (2 * m * d) + 2 * m * d + head;
    case MethodKind::PTuning: return nv * d + d * f + f + f * d + d + head;
    case MethodKind::LoRA: return 2 * m * 2 * d * o.rank + head;
    case MethodKind::SKPrefix: return 2 * m * (d * d + d) + head;
    case MethodKind::SKPrompt: {
      const std::size_t r = o.bottleneck;
      return o.adapter_layers * (d * r + r + r * d + d) + head;
    }
  }
  return 0;
}

inline constexpr MethodKind kAllMethods[] = {MethodKind::FullFT,  MethodKind::PromptVirtual, MethodKind::PrefixVirtual,
                                             MethodKind::PTuning, MethodKind::LoRA,          MethodKind::SKPrefix,
                                             MethodKind::SKPrompt};

}  // namespace sktune::testing
