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


#include "u2s/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "u2s/error.hpp"
#include "u2s/format.hpp"

namespace u2s {

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm < 1e-6) {
    for (double& x : v) x = rng.normal();
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  }
  for (double& x : v) x /= norm;
  return v;
}

// Removes the components along `basis` (assumed orthonormal) and normalizes.
// Returns false when nothing is left.
bool orthonormalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double d = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
  }
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm < 1e-6) return false;
  for (double& x : v) x /= norm;
  return true;
}

// Texture codes: orthonormal while the code dimension allows, random unit
// vectors afterwards.
std::vector<std::vector<double>> draw_codes(Rng& rng, std::size_t count, std::size_t dim) {
  std::vector<std::vector<double>> codes;
  while (codes.size() < count) {
    auto v = random_unit(rng, dim);
    if (codes.size() < dim) {
      if (!orthonormalize(v, codes)) continue;
    }
    codes.push_back(std::move(v));
  }
  return codes;
}

std::size_t pick_corner(Rng& rng, std::size_t extent, std::size_t patch, std::size_t period) {
  const std::size_t span = extent - patch;
  if (period > 0 && period <= span + 1) {
    return period * static_cast<std::size_t>(rng.below(span / period + 1));
  }
  return static_cast<std::size_t>(rng.below(span + 1));
}

}  // namespace

void DatasetSpec::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::kValidation, "dataset: " + msg); };
  if (num_classes < 2) bad("num_classes must be at least 2");
  if (train_per_class == 0 || test_per_class == 0) bad("samples per class must be positive");
  if (grid.frames == 0 || grid.height == 0 || grid.width == 0) bad("grid extents must be positive");
  if (texture_period == 0) bad("texture_period must be positive");
  if (!(signal_scale >= 0.0) || !(noise_scale >= 0.0) || !(marker_scale >= 0.0) ||
      !(patch_scale >= 0.0)) {
    bad("scales must be nonnegative");
  }
  if (discriminant_patch.height == 0 || discriminant_patch.width == 0) {
    bad("discriminant_patch extents must be positive");
  }
  if (discriminant_patch.height > grid.height || discriminant_patch.width > grid.width) {
    bad("discriminant_patch does not fit inside the grid");
  }
  std::vector<bool> used(static_cast<std::size_t>(num_classes), false);
  for (const auto& [a, b] : confusable_pairs) {
    if (a < 0 || b < 0 || a >= num_classes || b >= num_classes) {
      bad("confusable pair (" + std::to_string(a) + ", " + std::to_string(b) +
          ") references an invalid class");
    }
    if (a == b) bad("confusable pair must join two distinct classes");
    if (used[static_cast<std::size_t>(a)] || used[static_cast<std::size_t>(b)]) {
      bad("confusable pairs must be disjoint");
    }
    used[static_cast<std::size_t>(a)] = used[static_cast<std::size_t>(b)] = true;
  }
  if (!pair_contrast.empty() && pair_contrast.size() != confusable_pairs.size()) {
    bad("pair_contrast needs one entry per confusable pair");
  }
  for (double c : pair_contrast) {
    if (!(c > 0.0) || !std::isfinite(c)) bad("pair_contrast entries must be positive");
  }
  if (!(texture_overlap >= 0.0)) bad("texture_overlap must be nonnegative");
}

std::optional<PlantedPatch> SyntheticData::patch_for_class(int label) const {
  for (const auto& p : patches) {
    if (p.class_a == label || p.class_b == label) return p;
  }
  return std::nullopt;
}

SyntheticData generate_confusable_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto m = static_cast<std::size_t>(spec.num_classes);
  const std::size_t period = spec.texture_period;
  const std::size_t code_dim = period * period;

  // Texture group per class: pairs share one group, other classes get their own.
  std::vector<std::size_t> group(m, 0);
  std::vector<int> pair_of(m, -1);
  std::size_t groups = 0;
  for (std::size_t k = 0; k < spec.confusable_pairs.size(); ++k) {
    const auto [a, b] = spec.confusable_pairs[k];
    group[static_cast<std::size_t>(a)] = group[static_cast<std::size_t>(b)] = groups++;
    pair_of[static_cast<std::size_t>(a)] = pair_of[static_cast<std::size_t>(b)] =
        static_cast<int>(k);
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (pair_of[c] < 0) group[c] = groups++;
  }
  auto codes = draw_codes(rng, groups, code_dim);
  if (spec.texture_overlap > 0.0 && !spec.pair_contrast.empty()) {
    // Low-contrast pairs also lean toward the mean texture of all groups.
    std::vector<double> shared(code_dim, 0.0);
    for (const auto& c : codes)
      for (std::size_t i = 0; i < code_dim; ++i) shared[i] += c[i];
    const double top = *std::max_element(spec.pair_contrast.begin(), spec.pair_contrast.end());
    for (std::size_t k = 0; k < spec.confusable_pairs.size(); ++k) {
      const double b = std::min(1.0, spec.texture_overlap * (1.0 - spec.pair_contrast[k] / top));
      auto& c = codes[group[static_cast<std::size_t>(spec.confusable_pairs[k].first)]];
      for (std::size_t i = 0; i < code_dim; ++i) c[i] = (1.0 - b) * c[i] + b * shared[i];
      orthonormalize(c, {});
    }
  }

  SyntheticData out;
  std::vector<std::vector<double>> discriminants;
  std::vector<std::vector<double>> markers;
  for (std::size_t k = 0; k < spec.confusable_pairs.size(); ++k) {
    const auto [a, b] = spec.confusable_pairs[k];
    PlantedPatch p;
    p.class_a = a;
    p.class_b = b;
    p.size = spec.discriminant_patch;
    p.row = pick_corner(rng, spec.grid.height, p.size.height, period);
    p.col = pick_corner(rng, spec.grid.width, p.size.width, period);
    out.patches.push_back(p);
    // Distinct discriminant codes for the two members, orthogonal to the
    // shared texture while the code dimension allows.
    std::vector<std::vector<double>> basis{codes[group[static_cast<std::size_t>(a)]]};
    for (int member = 0; member < 2; ++member) {
      auto d = random_unit(rng, code_dim);
      if (basis.size() < code_dim) {
        while (!orthonormalize(d, basis)) d = random_unit(rng, code_dim);
      }
      basis.push_back(d);
      discriminants.push_back(std::move(d));
    }
    auto marker = random_unit(rng, code_dim);
    if (basis.size() < code_dim) {
      while (!orthonormalize(marker, basis)) marker = random_unit(rng, code_dim);
    }
    markers.push_back(std::move(marker));
  }

  const Grid& g = spec.grid;
  auto make_sample = [&](int label) {
    const auto c = static_cast<std::size_t>(label);
    const auto& code = codes[group[c]];
    const PlantedPatch* patch = nullptr;
    double contrast = 1.0;
    const std::vector<double>* disc = nullptr;
    const std::vector<double>* marker = nullptr;
    if (pair_of[c] >= 0) {
      const auto k = static_cast<std::size_t>(pair_of[c]);
      patch = &out.patches[k];
      disc = &discriminants[2 * k + (patch->class_a == label ? 0 : 1)];
      marker = &markers[k];
      if (!spec.pair_contrast.empty()) contrast = spec.pair_contrast[k];
    }
    Tensor frames({g.frames, 1, g.height, g.width});
    for (std::size_t t = 0; t < g.frames; ++t)
      for (std::size_t h = 0; h < g.height; ++h)
        for (std::size_t w = 0; w < g.width; ++w) {
          const std::size_t slot = (h % period) * period + (w % period);
          double v = spec.signal_scale * code[slot];
          if (patch && patch->contains(h, w)) {
            v += contrast * spec.patch_scale * (*disc)[slot] +
                 spec.marker_scale * (*marker)[slot];
          }
          if (spec.noise_scale > 0.0) v += spec.noise_scale * rng.normal();
          frames[(t * g.height + h) * g.width + w] = v;
        }
    return Sample{std::move(frames), label};
  };

  for (Dataset* d : {&out.train, &out.test}) {
    d->grid = g;
    d->channels = 1;
    d->num_classes = spec.num_classes;
  }
  for (int label = 0; label < spec.num_classes; ++label) {
    for (std::size_t i = 0; i < spec.train_per_class; ++i) {
      out.train.samples.push_back(make_sample(label));
    }
  }
  for (int label = 0; label < spec.num_classes; ++label) {
    for (std::size_t i = 0; i < spec.test_per_class; ++i) {
      out.test.samples.push_back(make_sample(label));
    }
  }
  return out;
}

std::vector<std::size_t> sample_frame_indices(std::size_t source_len, const SamplingPlan& plan,
                                              Rng& rng) {
  if (plan.num_segments == 0) {
    fail(ErrorCode::kInvalidArgument, "sampling plan needs at least one segment");
  }
  if (source_len < plan.num_segments) {
    fail(ErrorCode::kInvalidArgument, "source has " + std::to_string(source_len) +
                                          " frames, fewer than " +
                                          std::to_string(plan.num_segments) + " segments");
  }
  const std::size_t sub = source_len / plan.num_segments;
  const std::size_t offset = plan.mode == SamplingMode::kTestFixed
                                 ? sub / 2
                                 : static_cast<std::size_t>(rng.below(sub));
  std::vector<std::size_t> idx(plan.num_segments);
  for (std::size_t k = 0; k < plan.num_segments; ++k) idx[k] = k * sub + offset;
  return idx;
}

std::vector<std::vector<std::size_t>> iterate_minibatches(
    std::size_t count, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) fail(ErrorCode::kInvalidArgument, "batch_size must be at least 1");
  if (count == 0) fail(ErrorCode::kEmptyInput, "cannot iterate an empty dataset");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    for (std::size_t i = count - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < count; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return batches;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices,
                 const SamplingPlan& plan, Rng& rng) {
  const Grid& g = data.grid;
  const std::size_t c = data.channels;
  const std::size_t frame_size = c * g.height * g.width;
  Batch b;
  b.input = Tensor({indices.size(), plan.num_segments, c, g.height, g.width});
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& s = data.samples.at(indices[i]);
    const auto frames = sample_frame_indices(s.frames.dim(0), plan, rng);
    for (std::size_t k = 0; k < frames.size(); ++k) {
      std::copy_n(s.frames.values.begin() + static_cast<std::ptrdiff_t>(frames[k] * frame_size),
                  frame_size,
                  b.input.values.begin() +
                      static_cast<std::ptrdiff_t>((i * plan.num_segments + k) * frame_size));
    }
    b.labels.push_back(s.label);
  }
  return b;
}

Dataset read_csv_dataset(const std::filesystem::path& path, const Grid& grid, int num_classes,
                         std::size_t channels) {
  const std::string text = read_text_file(path);
  Dataset d;
  d.grid = grid;
  d.channels = channels;
  d.num_classes = num_classes;
  const std::size_t expected = grid.frames * channels * grid.height * grid.width;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> fields;
    std::size_t start = 0;
    try {
      while (true) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(parse_double(std::string_view(line).substr(
            start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    } catch (const Error& e) {
      fail(ErrorCode::kIo, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() != expected + 1) {
      fail(ErrorCode::kIo, path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(expected + 1) + " fields, got " +
                               std::to_string(fields.size()));
    }
    const double label = fields[0];
    if (label != std::floor(label) || label < 0 || label >= num_classes) {
      fail(ErrorCode::kLabelRange, path.string() + ":" + std::to_string(line_no) + ": label " +
                                       format_double(label) + " outside [0, " +
                                       std::to_string(num_classes) + ")");
    }
    fields.erase(fields.begin());
    d.samples.push_back(
        Sample{Tensor({grid.frames, channels, grid.height, grid.width}, std::move(fields)),
               static_cast<int>(label)});
  }
  if (d.samples.empty()) fail(ErrorCode::kEmptyInput, path.string() + ": no samples");
  return d;
}

void write_csv_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::string out;
  for (const Sample& s : data.samples) {
    out += std::to_string(s.label);
    for (double v : s.frames.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace u2s
