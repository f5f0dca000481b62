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


#include "u2s/config.hpp"

#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "u2s/csm.hpp"
#include "u2s/error.hpp"
#include "u2s/format.hpp"
#include "u2s/masknet.hpp"

namespace u2s {
namespace {

constexpr std::uint64_t kDataSeedTag = 0xDA7A;

[[noreturn]] void invalid(const std::string& msg) { fail(ErrorCode::kValidation, "config: " + msg); }

std::string_view fusion_kind_name(FusionKind kind) {
  return kind == FusionKind::kLogits ? "logits" : "probabilities";
}

// Typed access to one table that remembers which keys were consumed, so the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  const toml::node* find(std::string_view key) {
    if (!table_) return nullptr;
    seen_.insert(std::string(key));
    return table_->get(key);
  }

  void get(std::string_view key, double& out) {
    if (const auto* n = find(key)) {
      if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) {
        out = *v;
      } else {
        type_error(key, "a number");
      }
    }
  }

  void get(std::string_view key, std::size_t& out) {
    if (const auto* n = find(key)) {
      const auto v = n->is_integer() ? n->value<std::int64_t>() : std::nullopt;
      if (!v || *v < 0) type_error(key, "a nonnegative integer");
      out = static_cast<std::size_t>(*v);
    }
  }

  void get(std::string_view key, int& out) {
    std::size_t v = 0;
    if (find(key)) {
      get(key, v);
      out = static_cast<int>(v);
    }
  }

  void get(std::string_view key, std::string& out) {
    if (const auto* n = find(key)) {
      if (!n->is_string()) type_error(key, "a string");
      out = *n->value<std::string>();
    }
  }

  void get(std::string_view key, std::vector<double>& out) {
    if (const auto* n = find(key)) {
      const auto* arr = n->as_array();
      if (!arr) type_error(key, "an array of numbers");
      out.clear();
      for (const auto& e : *arr) {
        if (!e.is_number()) type_error(key, "an array of numbers");
        out.push_back(*e.value<double>());
      }
    }
  }

  void get(std::string_view key, std::vector<std::string>& out) {
    if (const auto* n = find(key)) {
      const auto* arr = n->as_array();
      if (!arr) type_error(key, "an array of strings");
      out.clear();
      for (const auto& e : *arr) {
        if (!e.is_string()) type_error(key, "an array of strings");
        out.push_back(*e.value<std::string>());
      }
    }
  }

  void get(std::string_view key, std::vector<std::pair<int, int>>& out) {
    if (const auto* n = find(key)) {
      const auto* arr = n->as_array();
      if (!arr) type_error(key, "an array of [a, b] pairs");
      out.clear();
      for (const auto& e : *arr) {
        const auto* pair = e.as_array();
        if (!pair || pair->size() != 2 || !(*pair)[0].is_integer() || !(*pair)[1].is_integer()) {
          type_error(key, "an array of [a, b] pairs");
        }
        out.emplace_back(static_cast<int>(*(*pair)[0].value<std::int64_t>()),
                         static_cast<int>(*(*pair)[1].value<std::int64_t>()));
      }
    }
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [key, node] : *table_) {
      if (!seen_.count(std::string(key.str()))) {
        invalid("unknown key '" + std::string(key.str()) + "' in [" + name_ + "]");
      }
    }
  }

 private:
  [[noreturn]] void type_error(std::string_view key, std::string_view expected) const {
    invalid("[" + name_ + "] " + std::string(key) + " must be " + std::string(expected));
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void get_enum(Section& s, std::string_view key, Enum& out, Parse parse) {
  std::string text;
  if (!s.find(key)) return;
  s.get(key, text);
  try {
    out = parse(text);
  } catch (const Error& e) {
    invalid(std::string(key) + ": " + e.what());
  }
}

FusionKind parse_fusion_kind(std::string_view name) {
  if (name == "probabilities") return FusionKind::kProbabilities;
  if (name == "logits") return FusionKind::kLogits;
  fail(ErrorCode::kUnknownKind, "unknown fusion kind '" + std::string(name) + "'");
}

std::vector<std::string> head_names(unsigned heads) {
  std::vector<std::string> out;
  for (auto [bit, name] : {std::pair{kUniversalHeadOut, "universal"},
                           std::pair{kBridgeHeadOut, "bridge"},
                           std::pair{kSpecificHeadOut, "specific"}}) {
    if (heads & bit) out.emplace_back(name);
  }
  return out;
}

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <typename T, typename F>
std::string list(const std::vector<T>& v, F fmt) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt(v[i]);
  }
  return out + "]";
}

std::string num(double v) {
  std::string s = format_double(v);
  // Keep floats recognizable as floats in TOML.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void write_model_sections(std::ostringstream& o, const RunConfig& c, bool canonical) {
  const auto& d = c.dataset;
  o << "[data]\n";
  o << "source = " << quote(c.synthetic ? "synthetic" : "csv") << "\n";
  o << "num_classes = " << d.num_classes << "\n";
  o << "frames = " << d.grid.frames << "\n";
  o << "height = " << d.grid.height << "\n";
  o << "width = " << d.grid.width << "\n";
  if (c.synthetic) {
    o << "confusable_pairs = "
      << list(d.confusable_pairs,
              [](const auto& p) {
                return "[" + std::to_string(p.first) + ", " + std::to_string(p.second) + "]";
              })
      << "\n";
    o << "pair_contrast = " << list(d.pair_contrast, num) << "\n";
    o << "train_per_class = " << d.train_per_class << "\n";
    o << "test_per_class = " << d.test_per_class << "\n";
    o << "signal_scale = " << num(d.signal_scale) << "\n";
    o << "patch_scale = " << num(d.patch_scale) << "\n";
    o << "marker_scale = " << num(d.marker_scale) << "\n";
    o << "noise_scale = " << num(d.noise_scale) << "\n";
    o << "texture_overlap = " << num(d.texture_overlap) << "\n";
    o << "texture_period = " << d.texture_period << "\n";
    o << "patch_height = " << d.discriminant_patch.height << "\n";
    o << "patch_width = " << d.discriminant_patch.width << "\n";
  } else {
    o << "channels = " << c.model.channels << "\n";
    o << "train_csv = " << quote(c.train_csv.generic_string()) << "\n";
    o << "test_csv = " << quote(c.test_csv.generic_string()) << "\n";
  }
  if (!canonical && !c.class_names.empty()) {
    o << "class_names = " << list(c.class_names, quote) << "\n";
  }

  const auto& m = c.model;
  o << "\n[model]\n";
  o << "frames = " << m.frames << "\n";
  o << "patch = " << m.patch << "\n";
  o << "embed_channels = " << m.embed_channels << "\n";
  o << "feature_channels = " << m.feature_channels << "\n";
  o << "bottom_layers = " << m.bottom_layers << "\n";
  o << "top_layers = " << m.top_layers << "\n";
  o << "mix_radius = " << m.mix_radius << "\n";

  const auto& t = c.train;
  o << "\n[train]\n";
  o << "lr_universal = " << num(t.lr_universal) << "\n";
  o << "lr_specific = " << num(t.lr_specific) << "\n";
  o << "lr_joint = " << num(t.lr_joint) << "\n";
  o << "lr_decay = " << num(t.lr_decay) << "\n";
  o << "patience = " << t.patience << "\n";
  o << "max_decays = " << t.max_decays << "\n";
  o << "momentum = " << num(t.momentum) << "\n";
  o << "weight_decay = " << num(t.weight_decay) << "\n";
  o << "batch_size = " << t.batch_size << "\n";
  o << "epochs_universal = " << t.epochs_universal << "\n";
  o << "epochs_specific = " << t.epochs_specific << "\n";
  o << "epochs_joint = " << t.epochs_joint << "\n";
  o << "lambda = " << num(t.lambda) << "\n";
  o << "weight_similarity = " << quote(weight_similarity_name(t.weight_similarity)) << "\n";
  o << "fusion = " << list(head_names(t.fusion_set), quote) << "\n";
  o << "fusion_kind = " << quote(fusion_kind_name(t.fusion)) << "\n";

  o << "\n[csm]\n";
  o << "target_degree = " << num(t.target_degree) << "\n";
  o << "mode = " << quote(csm_mode_name(t.csm_mode)) << "\n";
  o << "distance = " << quote(distance_kind_name(t.distance)) << "\n";
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  dataset.seed = derive_seed(s, kDataSeedTag);
  model.seed = s;
  train.seed = s;
}

std::vector<std::string> RunConfig::resolved_class_names() const {
  if (!class_names.empty()) return class_names;
  std::vector<std::string> out;
  for (int k = 0; k < model.num_classes; ++k) out.push_back("class_" + std::to_string(k));
  return out;
}

void RunConfig::validate() const {
  if (name.empty() || name.find_first_of("/\\") != std::string::npos || name == "." ||
      name == "..") {
    invalid("run name must be a nonempty single path component");
  }
  if (synthetic) {
    dataset.validate();
  } else if (train_csv.empty() || test_csv.empty()) {
    invalid("csv source needs train_csv and test_csv");
  }
  model.validate();
  train.validate();
  if (model.num_classes != dataset.num_classes) invalid("model and data class counts differ");
  if (model.height != dataset.grid.height || model.width != dataset.grid.width) {
    invalid("model input extents differ from the data grid");
  }
  if (model.frames > dataset.grid.frames) {
    invalid("model frames (" + std::to_string(model.frames) + ") exceed source frames (" +
            std::to_string(dataset.grid.frames) + ")");
  }
  const auto m = static_cast<double>(model.num_classes);
  if (train.target_degree >= m) invalid("csm target_degree must be below num_classes");
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(model.num_classes)) {
    invalid("class_names needs num_classes entries");
  }
  if (analysis.histogram_bins == 0) invalid("analysis histogram_bins must be positive");
  if (analysis.sweep_degrees.empty()) invalid("analysis sweep_degrees must be nonempty");
  for (double n : analysis.sweep_degrees) {
    if (!(n >= 1.0 && n < m)) invalid("sweep degree " + format_double(n) + " outside [1, M)");
  }
  static const std::set<std::string> kSources{"one_pass", "universal", "specific", "u2s"};
  for (const auto& s : analysis.scatter_sources) {
    if (!kSources.count(s)) invalid("unknown scatter source '" + s + "'");
  }
}

std::string RunConfig::canonical() const {
  std::ostringstream o;
  o << "seed = " << seed << "\n";
  write_model_sections(o, *this, true);
  return o.str();
}

std::uint64_t RunConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig default_run_config() {
  RunConfig c;
  c.dataset.confusable_pairs = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  c.dataset.pair_contrast = {1.0, 0.8, 0.6, 0.4};
  c.model.frames = 2;
  c.model.channels = 1;
  c.model.height = c.dataset.grid.height;
  c.model.width = c.dataset.grid.width;
  c.model.num_classes = c.dataset.num_classes;
  c.train.lr_universal = 0.03;
  c.train.lr_specific = 0.1;
  c.train.lr_joint = 0.03;
  c.train.epochs_joint = 20;
  c.set_seed(0);
  return c;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML syntax error at line " << e.source().begin.line << ": " << e.description();
    invalid(msg.str());
  }
  static const std::set<std::string> kTables{"run", "data", "model", "train", "csm", "analysis"};
  for (const auto& [key, node] : root) {
    if (!kTables.count(std::string(key.str()))) {
      invalid("unknown table [" + std::string(key.str()) + "]");
    }
    if (!node.is_table()) invalid("'" + std::string(key.str()) + "' must be a table");
  }
  auto table = [&](const char* name) { return root[name].as_table(); };

  RunConfig c = default_run_config();

  Section run(table("run"), "run");
  run.get("name", c.name);
  std::string out_dir = c.output_dir.generic_string();
  run.get("output_dir", out_dir);
  c.output_dir = out_dir;
  std::size_t seed = 0;
  run.get("seed", seed);
  run.reject_unknown();

  Section data(table("data"), "data");
  auto& d = c.dataset;
  std::string source = "synthetic";
  data.get("source", source);
  if (source != "synthetic" && source != "csv") invalid("[data] source must be synthetic or csv");
  c.synthetic = source == "synthetic";
  data.get("num_classes", d.num_classes);
  data.get("frames", d.grid.frames);
  data.get("height", d.grid.height);
  data.get("width", d.grid.width);
  data.get("class_names", c.class_names);
  if (c.synthetic) {
    data.get("confusable_pairs", d.confusable_pairs);
    // Pairs given without contrasts get full contrast.
    if (data.find("confusable_pairs") && !data.find("pair_contrast")) d.pair_contrast.clear();
    data.get("pair_contrast", d.pair_contrast);
    data.get("train_per_class", d.train_per_class);
    data.get("test_per_class", d.test_per_class);
    data.get("signal_scale", d.signal_scale);
    data.get("patch_scale", d.patch_scale);
    data.get("marker_scale", d.marker_scale);
    data.get("noise_scale", d.noise_scale);
    data.get("texture_overlap", d.texture_overlap);
    data.get("texture_period", d.texture_period);
    data.get("patch_height", d.discriminant_patch.height);
    data.get("patch_width", d.discriminant_patch.width);
  } else {
    std::string train_csv, test_csv;
    data.get("train_csv", train_csv);
    data.get("test_csv", test_csv);
    data.get("channels", c.model.channels);
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
      if (p.empty()) return {};
      const std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    c.train_csv = resolve(train_csv);
    c.test_csv = resolve(test_csv);
  }
  data.reject_unknown();

  Section model(table("model"), "model");
  auto& m = c.model;
  model.get("frames", m.frames);
  model.get("patch", m.patch);
  model.get("embed_channels", m.embed_channels);
  model.get("feature_channels", m.feature_channels);
  model.get("bottom_layers", m.bottom_layers);
  model.get("top_layers", m.top_layers);
  model.get("mix_radius", m.mix_radius);
  model.reject_unknown();
  m.height = d.grid.height;
  m.width = d.grid.width;
  m.num_classes = d.num_classes;

  Section train(table("train"), "train");
  auto& t = c.train;
  train.get("lr_universal", t.lr_universal);
  train.get("lr_specific", t.lr_specific);
  train.get("lr_joint", t.lr_joint);
  train.get("lr_decay", t.lr_decay);
  train.get("patience", t.patience);
  train.get("max_decays", t.max_decays);
  train.get("momentum", t.momentum);
  train.get("weight_decay", t.weight_decay);
  train.get("batch_size", t.batch_size);
  train.get("epochs_universal", t.epochs_universal);
  train.get("epochs_specific", t.epochs_specific);
  train.get("epochs_joint", t.epochs_joint);
  train.get("lambda", t.lambda);
  get_enum(train, "weight_similarity", t.weight_similarity, parse_weight_similarity);
  if (train.find("fusion")) {
    std::vector<std::string> heads;
    train.get("fusion", heads);
    try {
      t.fusion_set = parse_head_set(heads);
    } catch (const Error& e) {
      invalid(std::string("fusion: ") + e.what());
    }
  }
  get_enum(train, "fusion_kind", t.fusion, parse_fusion_kind);
  train.reject_unknown();

  Section csm(table("csm"), "csm");
  csm.get("target_degree", t.target_degree);
  get_enum(csm, "mode", t.csm_mode, parse_csm_mode);
  get_enum(csm, "distance", t.distance, parse_distance_kind);
  csm.reject_unknown();

  Section analysis(table("analysis"), "analysis");
  auto& a = c.analysis;
  analysis.get("histogram_bins", a.histogram_bins);
  analysis.get("sweep_degrees", a.sweep_degrees);
  analysis.get("mask_samples", a.mask_samples);
  analysis.get("scatter_sources", a.scatter_sources);
  analysis.reject_unknown();

  c.set_seed(seed);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = parse_run_config(read_text_file(path), path.parent_path());
  if (const char* env = std::getenv("U2S_SEED"); env && *env) {
    std::uint64_t seed = 0;
    const std::string_view text(env);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      invalid("U2S_SEED must be a nonnegative integer, got '" + std::string(text) + "'");
    }
    c.set_seed(seed);
  }
  return c;
}

std::string run_config_to_toml(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\n";
  o << "name = " << quote(c.name) << "\n";
  o << "output_dir = " << quote(c.output_dir.generic_string()) << "\n";
  o << "seed = " << c.seed << "\n\n";
  write_model_sections(o, c, false);
  const auto& a = c.analysis;
  o << "\n[analysis]\n";
  o << "histogram_bins = " << a.histogram_bins << "\n";
  o << "sweep_degrees = " << list(a.sweep_degrees, num) << "\n";
  o << "mask_samples = " << a.mask_samples << "\n";
  o << "scatter_sources = " << list(a.scatter_sources, quote) << "\n";
  return o.str();
}

}  // namespace u2s
