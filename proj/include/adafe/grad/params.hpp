// Copyright (c) 2026 The adafe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Named parameter storage and the ADFP checkpoint format.
//
// Checkpoint layout (little endian):
//   "ADFP" u32 version u32 count
//   count x { u32 name_len, name bytes, u8 trainable, u32 rank, rank x u32
//             dim, numel x float32 }

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "adafe/audio_io.hpp"
#include "adafe/error.hpp"
#include "adafe/grad/tape.hpp"

namespace adafe::grad {

template <class T>
struct Param {
  std::string name;
  Shape shape;
  std::vector<T> value;
  bool trainable = true;
};

template <class T>
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape, std::vector<T> value, bool trainable = true) {
    require(value.size() == numel(shape), Errc::kShapeMismatch, [&] { return "param " + name + " size"; });
    require(find(name) == npos, Errc::kInvalidConfig, [&] { return "duplicate param " + name; });
    params_.push_back({std::move(name), std::move(shape), std::move(value), trainable});
    return params_.size() - 1;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    return npos;
  }

  Param<T>& at(const std::string& name) {
    const std::size_t i = find(name);
    require(i != npos, Errc::kInvalidConfig, [&] { return "no param named " + name; });
    return params_[i];
  }
  const Param<T>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return find(name) != npos; }

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Number of trainable scalars.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.value.size();
    return n;
  }

  // One tape leaf per parameter, indexed like the store.
  std::vector<Var<T>> bind(Tape<T>& tape) const {
    std::vector<Var<T>> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(tape.leaf(p.shape, p.value, p.trainable, p.name));
    return vars;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_)
      out.add(p.name, p.shape, std::vector<U>(p.value.begin(), p.value.end()), p.trainable);
    return out;
  }

 private:
  std::vector<Param<T>> params_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const ParamStore<T>& store) {
  using adafe::detail::put_u32;
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'A', 'D', 'F', 'P'});
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& p : store) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    out.push_back(p.trainable ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t d : p.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (T v : p.value) put_u32(out, adafe::detail::bits_from_float(static_cast<float>(v)));
  }
  return out;
}

template <class T>
ParamStore<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using adafe::detail::read_u32;
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    require(at + n <= bytes.size(), Errc::kMalformedHeader, "truncated checkpoint");
  };
  need(12);
  require(std::memcmp(bytes.data(), "ADFP", 4) == 0, Errc::kMalformedHeader, "not an ADFP checkpoint");
  require(read_u32(bytes, 4) == kCheckpointVersion, Errc::kMalformedHeader, "checkpoint version");
  const std::uint32_t count = read_u32(bytes, 8);
  at = 12;
  ParamStore<T> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    need(4);
    const std::uint32_t len = read_u32(bytes, at);
    at += 4;
    need(len + 5);
    std::string name(reinterpret_cast<const char*>(bytes.data() + at), len);
    at += len;
    const bool trainable = bytes[at++] != 0;
    const std::uint32_t rank = read_u32(bytes, at);
    at += 4;
    need(4 * static_cast<std::size_t>(rank));
    Shape shape(rank);
    for (auto& d : shape) {
      d = read_u32(bytes, at);
      at += 4;
    }
    const std::size_t n = numel(shape);
    need(4 * n);
    std::vector<T> value(n);
    for (auto& v : value) {
      v = static_cast<T>(adafe::detail::float_from_bits(read_u32(bytes, at)));
      at += 4;
    }
    store.add(std::move(name), std::move(shape), std::move(value), trainable);
  }
  require(at == bytes.size(), Errc::kMalformedHeader, "trailing bytes after checkpoint");
  return store;
}

}  // namespace adafe::grad
