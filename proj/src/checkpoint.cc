// src/checkpoint.cc

// Copyright 2026  The CFRP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "cfrp/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cfrp/error.h"

namespace cfrp {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

namespace {

template <typename T>
void Put(std::string &out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string &bytes, const std::string &origin) : bytes_(bytes), origin_(origin) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string GetBytes(std::uint64_t n) {
    Need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void GetReals(Real *dst, std::uint64_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(Real)) Fail("truncated tensor payload");
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(Real));
    pos_ += n * sizeof(Real);
  }
  bool AtEnd() const { return pos_ == bytes_.size(); }
  [[noreturn]] void Fail(const std::string &why) const {
    throw DataError(origin_ + ": corrupt checkpoint (" + why + ")");
  }

 private:
  void Need(std::uint64_t n) {
    if (n > bytes_.size() - pos_) Fail("unexpected end of file");
  }
  const std::string &bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SerializeCheckpoint(const Checkpoint &ckpt) {
  std::string out = "CFRP";
  Put<std::uint32_t>(out, kCheckpointVersion);
  Put<std::uint64_t>(out, ckpt.manifest.size());
  out += ckpt.manifest;
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto &[name, t] : ckpt.tensors) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    Put<std::uint8_t>(out, 0);
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) Put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char *>(t.data()), t.size() * sizeof(Real));
  }
  return out;
}

Checkpoint ParseCheckpoint(const std::string &bytes, const std::string &origin) {
  Reader in(bytes, origin);
  if (in.GetBytes(4) != "CFRP") in.Fail("bad magic");
  std::uint32_t version = in.Get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw ConfigError(origin + ": checkpoint format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  ckpt.manifest = in.GetBytes(in.Get<std::uint64_t>());
  std::uint32_t count = in.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.GetBytes(in.Get<std::uint32_t>());
    if (in.Get<std::uint8_t>() != 0) in.Fail("unknown dtype for " + name);
    std::uint32_t rank = in.Get<std::uint32_t>();
    if (rank > 8) in.Fail("rank too large for " + name);
    Shape shape(rank);
    std::uint64_t n = 1;
    for (auto &d : shape) {
      d = in.Get<std::uint64_t>();
      if (d != 0 && n > (std::uint64_t{1} << 40) / d) in.Fail("tensor too large: " + name);
      n *= d;
    }
    Tensor t(shape);
    in.GetReals(t.data(), n);
    if (!ckpt.tensors.emplace(name, std::move(t)).second) in.Fail("duplicate tensor " + name);
  }
  if (!in.AtEnd()) in.Fail("trailing bytes");
  return ckpt;
}

void SaveCheckpoint(const Checkpoint &ckpt, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  std::string bytes = SerializeCheckpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("error writing checkpoint " + path);
}

Checkpoint LoadCheckpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseCheckpoint(buf.str(), path);
}

void PutParameters(Checkpoint &ckpt, const ParameterSet &params, const std::string &prefix) {
  for (const auto &[name, p] : params) ckpt.tensors[prefix + name] = p.value;
}

void GetParameters(const Checkpoint &ckpt, ParameterSet &params, const std::string &prefix) {
  for (auto &[name, p] : params) {
    auto it = ckpt.tensors.find(prefix + name);
    if (it == ckpt.tensors.end())
      throw ConfigError("checkpoint has no tensor '" + prefix + name + "'");
    if (it->second.shape() != p.value.shape())
      throw ConfigError("checkpoint tensor '" + prefix + name + "' has shape " +
                        ShapeToString(it->second.shape()) + ", expected " +
                        ShapeToString(p.value.shape()));
    p.value = it->second;
  }
}

}  // namespace cfrp
