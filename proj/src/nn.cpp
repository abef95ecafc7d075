// SPDX-License-Identifier: Apache-2.0
#include "dlf/nn.hpp"

#include <bit>
#include <cstring>

namespace dlf::nn {

namespace {
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, const void* bytes, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

Rng component_rng(std::uint64_t seed, std::string_view tag) {
  return Rng(splitmix64(seed ^ fnv1a(kFnvOffset, tag.data(), tag.size())));
}

ad::Tensor gaussian(ad::Shape shape, double stddev, Rng& rng, bool requires_grad) {
  auto t = ad::Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

Linear Linear::gaussian(std::size_t in, std::size_t out, double stddev, Rng& rng, bool trainable) {
  return {nn::gaussian({in, out}, stddev, rng, trainable), ad::Tensor::zeros({1, out}, trainable)};
}

ad::Tensor Linear::operator()(const ad::Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

std::size_t count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

std::uint64_t checksum(const ParamList& params) {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params) {
    auto d = p.tensor.data();
    h = fnv1a(h, d.data(), d.size() * sizeof(double));
  }
  return h;
}

}  // namespace dlf::nn
