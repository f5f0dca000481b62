// Copyright 2026 The U2S Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "u2s/checkpoint.hpp"

#include <algorithm>
#include <bit>

#include "u2s/error.hpp"
#include "u2s/format.hpp"

namespace u2s {
namespace {

constexpr std::string_view kMagic = "U2S1";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }

  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
  }

  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  void record(const std::string& name, const Tensor& t) {
    uint(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    uint(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t e : t.shape) uint(static_cast<std::uint64_t>(e));
    for (double v : t.values) f64(v);
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      fail(ErrorCode::kCheckpointTruncated, std::string("checkpoint truncated while reading ") +
                                                what + " at byte " + std::to_string(pos_));
    }
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T uint(const char* what) {
    auto s = bytes(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return static_cast<T>(v);
  }

  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }

  std::pair<std::string, Tensor> record() {
    const auto len = uint<std::uint32_t>("name length");
    std::string name(bytes(len, "name"));
    const auto rank = uint<std::uint32_t>("rank");
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto e = uint<std::uint64_t>("extent");
      // Guards the product against overflow; a real tensor this size would
      // not fit in the file anyway.
      if (e != 0 && count > remaining() / e) {
        fail(ErrorCode::kCheckpointTruncated, "checkpoint truncated: tensor '" + name +
                                                  "' claims more values than the file holds");
      }
      count *= static_cast<std::size_t>(e);
      shape.push_back(static_cast<std::size_t>(e));
    }
    if (count > remaining() / 8) {
      fail(ErrorCode::kCheckpointTruncated,
           "checkpoint truncated while reading values of '" + name + "'");
    }
    std::vector<double> values(count);
    for (double& v : values) v = f64("values");
    return {std::move(name), Tensor(std::move(shape), std::move(values))};
  }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const U2sModel& model, std::uint64_t fingerprint,
                           std::optional<Stage> stage, const OptimizerState* optimizer,
                           const Csm* csm) {
  Checkpoint c;
  c.fingerprint = fingerprint;
  c.stage = stage;
  for (const Parameter* p : model.parameters()) c.parameters.emplace_back(p->name, p->value);
  std::sort(c.parameters.begin(), c.parameters.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (optimizer) c.optimizer = *optimizer;
  if (csm) c.csm = *csm;
  return c;
}

void restore_parameters(U2sModel& model, const Checkpoint& checkpoint) {
  const auto params = model.parameters();
  if (params.size() != checkpoint.parameters.size()) {
    fail(ErrorCode::kShape, "checkpoint has " + std::to_string(checkpoint.parameters.size()) +
                                " parameters, model has " + std::to_string(params.size()));
  }
  for (const auto& [name, value] : checkpoint.parameters) {
    Parameter* p = model.find_parameter(name);
    if (!p) fail(ErrorCode::kShape, "checkpoint parameter '" + name + "' is not in the model");
    if (p->value.shape != value.shape) {
      fail(ErrorCode::kShape, "checkpoint parameter '" + name + "' has shape " +
                                  shape_string(value.shape) + ", model expects " +
                                  shape_string(p->value.shape));
    }
    p->value = value;
  }
}

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.bytes(kMagic);
  w.uint(c.version);
  w.uint(c.fingerprint);
  w.uint(static_cast<std::uint8_t>(c.stage ? static_cast<int>(*c.stage) + 1 : 0));
  auto params = c.parameters;
  std::sort(params.begin(), params.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  w.uint(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) w.record(name, t);
  w.uint(static_cast<std::uint32_t>(c.optimizer.velocity.size()));
  for (const auto& [name, t] : c.optimizer.velocity) w.record(name, t);
  w.f64(c.optimizer.learning_rate);
  w.f64(c.optimizer.momentum);
  w.f64(c.optimizer.weight_decay);
  w.uint(static_cast<std::uint8_t>(c.csm ? 1 : 0));
  if (c.csm) {
    const std::string json = csm_to_json(*c.csm);
    w.uint(static_cast<std::uint32_t>(json.size()));
    w.bytes(json);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    if (bytes.size() < kMagic.size() && kMagic.substr(0, bytes.size()) == bytes) {
      fail(ErrorCode::kCheckpointTruncated, "checkpoint truncated inside the magic bytes");
    }
    fail(ErrorCode::kCheckpointMagic, "not a checkpoint: magic bytes are not U2S1");
  }
  Reader r(bytes.substr(kMagic.size()));
  Checkpoint c;
  c.version = r.uint<std::uint32_t>("version");
  if (c.version != kCheckpointFormatVersion) {
    fail(ErrorCode::kCheckpointVersion,
         "checkpoint format version " + std::to_string(c.version) + " is not supported (expected " +
             std::to_string(kCheckpointFormatVersion) + ")");
  }
  c.fingerprint = r.uint<std::uint64_t>("fingerprint");
  const auto stage = r.uint<std::uint8_t>("stage");
  if (stage > 3) fail(ErrorCode::kRuntime, "checkpoint has invalid stage marker " +
                                               std::to_string(stage));
  if (stage > 0) c.stage = static_cast<Stage>(stage - 1);
  const auto n = r.uint<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < n; ++i) c.parameters.push_back(r.record());
  const auto nv = r.uint<std::uint32_t>("velocity count");
  for (std::uint32_t i = 0; i < nv; ++i) {
    auto [name, t] = r.record();
    c.optimizer.velocity.emplace(std::move(name), std::move(t));
  }
  c.optimizer.learning_rate = r.f64("learning rate");
  c.optimizer.momentum = r.f64("momentum");
  c.optimizer.weight_decay = r.f64("weight decay");
  if (r.uint<std::uint8_t>("csm flag")) {
    const auto len = r.uint<std::uint32_t>("csm length");
    c.csm = csm_from_json(r.bytes(len, "csm"));
  }
  if (r.remaining() != 0) {
    fail(ErrorCode::kRuntime,
         "checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_text_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_fingerprint, bool force) {
  Checkpoint c;
  try {
    c = decode_checkpoint(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    fail(e.code(), path.string() + ": " + e.what());
  }
  if (expected_fingerprint && *expected_fingerprint != c.fingerprint) {
    const std::string msg = path.string() + ": checkpoint was written under a different config";
    if (!force) fail(ErrorCode::kCheckpointFingerprint, msg + " (use --force to load anyway)");
    warn(msg + "; loading anyway");
  }
  return c;
}

}  // namespace u2s
