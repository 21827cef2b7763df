// Copyright 2026 The pfl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pfl/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pfl/errors.h"

namespace pfl {
namespace {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'F', 'L', 'T', 'E', 'N', 'S', '1'};
constexpr uint8_t kFloat64 = 1;

template <typename T>
void Put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string GetString(size_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void GetDoubles(double* dst, size_t n) {
    Need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(size_t n) const {
    if (pos_ + n > bytes_.size()) throw ProtocolError("truncated tensor archive");
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::string SerializeTensors(const NamedTensors& tensors) {
  std::string out(kMagic, sizeof(kMagic));
  Put<uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    Put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    Put<uint8_t>(out, kFloat64);
    Put<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (size_t e : t.shape()) Put<uint64_t>(out, e);
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  return out;
}

NamedTensors DeserializeTensors(const std::string& bytes) {
  Reader r(bytes);
  if (r.GetString(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ProtocolError("not a tensor archive (bad magic)");
  }
  const uint64_t count = r.Get<uint64_t>();
  NamedTensors out;
  for (uint64_t k = 0; k < count; ++k) {
    const uint32_t len = r.Get<uint32_t>();
    std::string name = r.GetString(len);
    if (r.Get<uint8_t>() != kFloat64) {
      throw ProtocolError("unsupported dtype for tensor '" + name + "'");
    }
    const uint32_t rank = r.Get<uint32_t>();
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = r.Get<uint64_t>();
    Tensor t(shape);
    r.GetDoubles(t.data(), t.size());
    out.emplace(std::move(name), std::move(t));
  }
  if (!r.done()) throw ProtocolError("trailing bytes after tensor archive");
  return out;
}

void SaveTensors(const std::string& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string bytes = SerializeTensors(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

NamedTensors LoadTensors(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return DeserializeTensors(ss.str());
}

uint64_t HashTensors(const NamedTensors& tensors) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : SerializeTensors(tensors)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

NamedTensors SelectPrefix(const NamedTensors& tensors, const std::string& prefix) {
  NamedTensors out;
  for (auto it = tensors.lower_bound(prefix);
       it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;
       ++it) {
    out.insert(*it);
  }
  return out;
}

}  // namespace pfl
