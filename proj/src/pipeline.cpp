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


#include "u2s/pipeline.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "u2s/analysis.hpp"
#include "u2s/checkpoint.hpp"
#include "u2s/csm.hpp"
#include "u2s/error.hpp"
#include "u2s/format.hpp"
#include "u2s/masknet.hpp"

namespace u2s {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr Stage kStages[] = {Stage::kUniversalOnly, Stage::kMaskAndSpecific, Stage::kJoint};

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

struct Loaded {
  U2sModel model;
  Checkpoint checkpoint;
};

Loaded load_model(const RunConfig& config, const fs::path& path, const CommandOptions& options) {
  Checkpoint ck = load_checkpoint(path, config.fingerprint(), options.force);
  U2sModel model(config.model);
  restore_parameters(model, ck);
  return {std::move(model), std::move(ck)};
}

const Csm& require_csm(const Loaded& l, const fs::path& path) {
  if (!l.checkpoint.csm) {
    fail(ErrorCode::kMissingCsm, path.string() + " holds no CSM; train the mask_and_specific stage first");
  }
  return *l.checkpoint.csm;
}

// Replaces the records of `stage` and later stages, keeping earlier ones, so
// rerunning a stage leaves the same file as running it once.
void write_history(const RunConfig& config, Stage stage, const std::vector<EpochRecord>& records) {
  const fs::path path = config.run_dir() / "history.jsonl";
  std::string out;
  if (fs::exists(path)) {
    std::istringstream in(read_text_file(path));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const auto j = ordered_json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("stage")) {
        fail(ErrorCode::kRuntime, path.string() + ": malformed history line");
      }
      if (parse_stage(j["stage"].get<std::string>()) < stage) out += line + "\n";
    }
  }
  for (const auto& r : records) out += epoch_record_json(r) + "\n";
  write_text_file(path, out);
}

ordered_json report_json(const EvalReport& r) {
  ordered_json j;
  j["top1"] = r.top1;
  j["top5"] = r.top5;
  j["per_class_top1"] = r.per_class_top1;
  std::vector<std::vector<std::size_t>> confusion(r.num_classes);
  for (std::size_t i = 0; i < r.num_classes; ++i) {
    confusion[i].assign(r.confusion.begin() + static_cast<std::ptrdiff_t>(i * r.num_classes),
                        r.confusion.begin() + static_cast<std::ptrdiff_t>((i + 1) * r.num_classes));
  }
  j["confusion"] = confusion;
  return j;
}

std::string stage_file(Stage s) { return std::string(stage_name(s)) + ".bin"; }

Stage previous(Stage s) { return static_cast<Stage>(static_cast<int>(s) - 1); }

// Trains stages 2 and 3 from a stage-1 model under `csm`; returns the final
// model and the stage-2 mean confusing-pair weight similarity.
struct Continued {
  U2sModel model;
  double mean_sw = 0.0;
};

Continued continue_training(const U2sModel& stage1, const DataSplits& data,
                            const TrainConfig& train, const Csm& csm) {
  Continued c{stage1, 0.0};
  train_stage(c.model, data.train, data.test, train, Stage::kMaskAndSpecific, &csm);
  c.mean_sw = mean_confusing_weight_similarity(c.model.mask_head.weight().value, csm,
                                               train.weight_similarity);
  train_stage(c.model, data.train, data.test, train, Stage::kJoint, &csm);
  return c;
}

}  // namespace

DataSplits load_data(const RunConfig& config) {
  DataSplits d;
  if (config.synthetic) {
    SyntheticData s = generate_confusable_dataset(config.dataset);
    d.train = std::move(s.train);
    d.test = std::move(s.test);
    d.patches = std::move(s.patches);
  } else {
    d.train = read_csv_dataset(config.train_csv, config.dataset.grid, config.dataset.num_classes,
                               config.model.channels);
    d.test = read_csv_dataset(config.test_csv, config.dataset.grid, config.dataset.num_classes,
                              config.model.channels);
  }
  return d;
}

fs::path stage_checkpoint_path(const RunConfig& config, Stage stage) {
  return config.run_dir() / "checkpoints" / stage_file(stage);
}

std::string run_gen_data(const RunConfig& config) {
  if (!config.synthetic) fail(ErrorCode::kValidation, "gen-data needs [data] source = \"synthetic\"");
  const DataSplits d = load_data(config);
  const fs::path dir = config.run_dir() / "data";
  write_csv_dataset(dir / "train.csv", d.train);
  write_csv_dataset(dir / "test.csv", d.test);
  ordered_json patches = ordered_json::array();
  for (const auto& p : d.patches) {
    patches.push_back({{"classes", {p.class_a, p.class_b}},
                       {"row", p.row},
                       {"col", p.col},
                       {"height", p.size.height},
                       {"width", p.size.width}});
  }
  write_text_file(dir / "patches.json", patches.dump(2) + "\n");
  std::ostringstream o;
  o << "wrote " << d.train.samples.size() << " train and " << d.test.samples.size()
    << " test samples to " << dir.generic_string();
  return o.str();
}

std::string run_train(const RunConfig& config, std::optional<Stage> stage,
                      const CommandOptions& options) {
  const DataSplits data = load_data(config);
  const auto names = config.resolved_class_names();
  std::ostringstream report;

  std::optional<U2sModel> model;
  std::optional<Csm> csm;
  for (Stage s : kStages) {
    if (stage && s != *stage) continue;
    if (s == Stage::kUniversalOnly) {
      model.emplace(config.model);
    } else if (!model) {
      const fs::path in = options.checkpoint.value_or(stage_checkpoint_path(config, previous(s)));
      Loaded l = load_model(config, in, options);
      if (l.checkpoint.stage != previous(s)) {
        fail(ErrorCode::kInvalidArgument,
             in.string() + " is not a " + std::string(stage_name(previous(s))) + " checkpoint");
      }
      model.emplace(std::move(l.model));
      csm = l.checkpoint.csm;
    }
    if (s == Stage::kMaskAndSpecific) {
      csm = build_csm(*model, data.train, config.train, names);
      write_text_file(config.run_dir() / "csm.json", csm_to_json(*csm) + "\n");
    }
    if (s != Stage::kUniversalOnly && !csm) {
      fail(ErrorCode::kMissingCsm, "stage " + std::string(stage_name(s)) + " needs a CSM");
    }
    const StageResult result = train_stage(*model, data.train, data.test, config.train, s,
                                           s == Stage::kUniversalOnly ? nullptr : &*csm);
    write_history(config, s, result.history);
    const fs::path out = stage_checkpoint_path(config, s);
    save_checkpoint(out, make_checkpoint(*model, config.fingerprint(), s, &result.optimizer,
                                         s == Stage::kUniversalOnly ? nullptr : &*csm));
    const EpochRecord& last = result.history.back();
    report << "stage " << stage_name(s) << ": " << result.history.size()
           << " epochs, loss " << format_double(last.train_losses.total) << ", val top-1 "
           << pct(last.val_top1) << "% -> " << out.generic_string() << "\n";
  }
  std::string text = report.str();
  if (!text.empty()) text.pop_back();
  return text;
}

std::string run_build_csm(const RunConfig& config, const CommandOptions& options) {
  const fs::path in =
      options.checkpoint.value_or(stage_checkpoint_path(config, Stage::kUniversalOnly));
  Loaded l = load_model(config, in, options);
  const DataSplits data = load_data(config);
  const Csm csm = build_csm(l.model, data.train, config.train, config.resolved_class_names());
  const fs::path out = config.run_dir() / "csm.json";
  write_text_file(out, csm_to_json(csm) + "\n");
  std::ostringstream o;
  o << "alpha " << format_double(csm.alpha) << ", mean degree " << format_double(csm.mean_degree())
    << " -> " << out.generic_string();
  return o.str();
}

std::string run_eval(const RunConfig& config, const CommandOptions& options) {
  const fs::path in = options.checkpoint.value_or(stage_checkpoint_path(config, Stage::kJoint));
  Loaded l = load_model(config, in, options);
  const DataSplits data = load_data(config);
  const Csm* csm = l.checkpoint.csm ? &*l.checkpoint.csm : nullptr;
  const HeadPredictions p = predict(l.model, data.test, csm, config.train);

  ordered_json j;
  j["checkpoint"] = in.filename().generic_string();
  j["stage"] = l.checkpoint.stage ? std::string(stage_name(*l.checkpoint.stage)) : "untrained";
  j["num_samples"] = p.labels.size();
  j["losses"] = {{"L_U", p.losses.universal},
                 {"L_C", p.losses.specific},
                 {"L_M", p.losses.bridge},
                 {"w_regular", p.losses.regular},
                 {"total", p.losses.total}};
  ordered_json heads;
  std::ostringstream o;
  for (Head h : {kUniversalHeadOut, kBridgeHeadOut, kSpecificHeadOut}) {
    if (h != kUniversalHeadOut && !csm) continue;
    const EvalReport r = evaluate_metrics(p.probs(h), p.labels);
    heads[head_set_name(h)] = report_json(r);
    o << head_set_name(h) << " top-1 " << pct(r.top1) << "% top-5 " << pct(r.top5) << "%\n";
  }
  j["heads"] = heads;
  if (csm) {
    const EvalReport r = evaluate_metrics(p.fused(config.train.fusion_set, config.train.fusion),
                                          p.labels);
    j["fused"] = report_json(r);
    j["fusion_set"] = head_set_name(config.train.fusion_set);
    o << "fused (" << head_set_name(config.train.fusion_set) << ") top-1 " << pct(r.top1)
      << "% top-5 " << pct(r.top5) << "%\n";
  }
  const std::string stage_tag = l.checkpoint.stage ? std::string(stage_name(*l.checkpoint.stage))
                                                   : "untrained";
  const fs::path out = config.run_dir() / ("eval_" + stage_tag + ".json");
  write_text_file(out, j.dump(2) + "\n");
  o << "-> " << out.generic_string();
  return o.str();
}

std::string run_ablate_fusion(const RunConfig& config, const CommandOptions& options) {
  const fs::path in = options.checkpoint.value_or(stage_checkpoint_path(config, Stage::kJoint));
  const fs::path base = options.baseline.value_or(in.parent_path() / stage_file(Stage::kUniversalOnly));
  Loaded l = load_model(config, in, options);
  const Csm& csm = require_csm(l, in);
  Loaded b = load_model(config, base, options);
  const DataSplits data = load_data(config);

  const HeadPredictions one_pass = predict(b.model, data.test, nullptr, config.train);
  const HeadPredictions p = predict(l.model, data.test, &csm, config.train);
  std::string csv = "heads,top1,top5\n";
  std::ostringstream o;
  auto row = [&](const std::string& name, const Tensor& scores) {
    const EvalReport r = evaluate_metrics(scores, p.labels);
    csv += name + "," + format_double(r.top1) + "," + format_double(r.top5) + "\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-28s %7s %7s\n", name.c_str(), pct(r.top1).c_str(),
                  pct(r.top5).c_str());
    o << line;
  };
  char header[128];
  std::snprintf(header, sizeof(header), "%-28s %7s %7s\n", "heads", "top-1", "top-5");
  o << header;
  row("one_pass", one_pass.probs(kUniversalHeadOut));
  // Table order: singles, pairs, all three.
  for (unsigned heads : {1u, 2u, 4u, 3u, 5u, 6u, 7u}) {
    row(head_set_name(heads), p.fused(heads, config.train.fusion));
  }
  const fs::path out = config.run_dir() / "fusion_table.csv";
  write_text_file(out, csv);
  o << "-> " << out.generic_string();
  return o.str();
}

std::string run_ablate_reg(const RunConfig& config, const CommandOptions& options) {
  const fs::path in =
      options.checkpoint.value_or(stage_checkpoint_path(config, Stage::kUniversalOnly));
  Loaded l = load_model(config, in, options);
  const DataSplits data = load_data(config);
  const Csm csm = build_csm(l.model, data.train, config.train, config.resolved_class_names());
  const double lambda = config.train.lambda > 0.0 ? config.train.lambda : 0.5;

  std::string csv = "lambda,mean_weight_similarity,top1,top5\n";
  std::ostringstream o;
  for (double lam : {0.0, lambda}) {
    TrainConfig t = config.train;
    t.lambda = lam;
    Continued c = continue_training(l.model, data, t, csm);
    const HeadPredictions p = predict(c.model, data.test, &csm, t);
    const EvalReport r = evaluate_metrics(p.fused(t.fusion_set, t.fusion), p.labels);
    csv += format_double(lam) + "," + format_double(c.mean_sw) + "," + format_double(r.top1) +
           "," + format_double(r.top5) + "\n";
    o << "lambda " << format_double(lam) << ": mean s^w " << format_double(c.mean_sw)
      << ", fused top-1 " << pct(r.top1) << "%\n";
  }
  const fs::path out = config.run_dir() / "ablate_reg.csv";
  write_text_file(out, csv);
  o << "-> " << out.generic_string();
  return o.str();
}

std::string run_sweep_n(const RunConfig& config, const CommandOptions& options) {
  const fs::path in =
      options.checkpoint.value_or(stage_checkpoint_path(config, Stage::kUniversalOnly));
  Loaded l = load_model(config, in, options);
  const DataSplits data = load_data(config);
  const Tensor similarity =
      feature_similarity(l.model, data.train, nullptr, config.train, FeatureSource::kUniversal);

  std::vector<SweepRow> rows;
  std::ostringstream o;
  for (double n : config.analysis.sweep_degrees) {
    TrainConfig t = config.train;
    t.target_degree = n;
    Csm csm = binarize_with_target_degree(similarity, n, t.csm_mode);
    csm.class_names = config.resolved_class_names();
    Continued c = continue_training(l.model, data, t, csm);
    const HeadPredictions p = predict(c.model, data.test, &csm, t);
    const EvalReport r = evaluate_metrics(p.fused(t.fusion_set, t.fusion), p.labels);
    rows.push_back({n, csm.alpha, csm.mean_degree(), r.top1, r.top5});
    o << "N_t " << format_double(n) << ": alpha " << format_double(csm.alpha) << ", degree "
      << format_double(csm.mean_degree()) << ", fused top-1 " << pct(r.top1) << "%\n";
  }
  const fs::path out = config.run_dir() / "sweep_n.csv";
  write_text_file(out, sweep_csv(rows));
  write_text_file(config.run_dir() / "figures" / "sweep_n.svg", sweep_svg(rows));
  o << "-> " << out.generic_string();
  return o.str();
}

std::string run_export_figures(const RunConfig& config, const CommandOptions& options) {
  const fs::path in = options.checkpoint.value_or(stage_checkpoint_path(config, Stage::kJoint));
  Loaded l = load_model(config, in, options);
  const Csm& csm = require_csm(l, in);
  const DataSplits data = load_data(config);
  const auto names = config.resolved_class_names();
  const fs::path dir = config.run_dir();
  const TrainConfig& t = config.train;
  std::ostringstream o;

  // Similarity vs accuracy, one file per source.
  const HeadPredictions p = predict(l.model, data.test, &csm, t);
  std::vector<ScatterRecord> all;
  for (const std::string& source : config.analysis.scatter_sources) {
    Tensor similarity;
    std::vector<double> accuracy;
    if (source == "one_pass") {
      const fs::path base =
          options.baseline.value_or(in.parent_path() / stage_file(Stage::kUniversalOnly));
      Loaded b = load_model(config, base, options);
      similarity = feature_similarity(b.model, data.test, nullptr, t, FeatureSource::kUniversal);
      const HeadPredictions bp = predict(b.model, data.test, nullptr, t);
      accuracy = evaluate_metrics(bp.probs(kUniversalHeadOut), bp.labels).per_class_top1;
    } else if (source == "universal") {
      similarity = feature_similarity(l.model, data.test, &csm, t, FeatureSource::kUniversal);
      accuracy = evaluate_metrics(p.probs(kUniversalHeadOut), p.labels).per_class_top1;
    } else if (source == "specific") {
      similarity = feature_similarity(l.model, data.test, &csm, t, FeatureSource::kSpecific);
      accuracy = evaluate_metrics(p.probs(kSpecificHeadOut), p.labels).per_class_top1;
    } else {
      similarity = feature_similarity(l.model, data.test, &csm, t, FeatureSource::kCombined);
      accuracy = evaluate_metrics(p.fused(t.fusion_set, t.fusion), p.labels).per_class_top1;
    }
    const auto records = scatter_records(source, similarity, accuracy, names);
    write_text_file(dir / ("scatter_" + source + ".csv"), scatter_csv(records));
    std::vector<double> xs, ys;
    for (const auto& r : records) {
      xs.push_back(r.similarity);
      ys.push_back(r.accuracy);
    }
    o << "scatter " << source << ": pearson " << format_double(pearson_correlation(xs, ys))
      << "\n";
    all.insert(all.end(), records.begin(), records.end());
  }
  if (!all.empty()) {
    write_text_file(dir / "figures" / "scatter.svg",
                    scatter_svg(all, "interclass similarity vs per-class top-1"));
  }

  // Mask-head weight similarity.
  const Tensor sw = weight_similarity_matrix(l.model.mask_head.weight().value, t.weight_similarity);
  const auto order = name_order(names);
  const Histogram hist = make_histogram(sw.values, config.analysis.histogram_bins);
  write_text_file(dir / "weights_sim.csv", matrix_csv(sw, names, order));
  write_text_file(dir / "weights_hist.csv", histogram_csv(hist));
  write_text_file(dir / "figures" / "weights_sim.svg",
                  matrix_svg(sw, names, order, "mask weight similarity"));
  write_text_file(dir / "figures" / "weights_hist.svg",
                  histogram_svg(hist, "mask weight similarity histogram"));
  o << "weight similarity: mean over confusing pairs "
    << format_double(mean_confusing_weight_similarity(l.model.mask_head.weight().value, csm,
                                                      t.weight_similarity))
    << "\n";

  // Mask heatmaps for the first samples of each class, with the class and its
  // CSM partners.
  std::vector<HeatmapRecord> maps;
  const int m = config.model.num_classes;
  for (int label = 0; label < m; ++label) {
    std::vector<int> classes{label};
    for (int j = 0; j < m; ++j) {
      if (j != label && csm.c(static_cast<std::size_t>(j), static_cast<std::size_t>(label))) {
        classes.push_back(j);
      }
    }
    std::size_t taken = 0;
    for (std::size_t i = 0; i < data.test.samples.size() && taken < config.analysis.mask_samples;
         ++i) {
      if (data.test.samples[i].label != label) continue;
      ++taken;
      const std::size_t sample[] = {i};
      for (auto& r : mask_heatmaps(l.model, data.test, sample, classes, csm)) {
        const std::string cls =
            r.category < 0 ? "combined" : names[static_cast<std::size_t>(r.category)];
        write_text_file(dir / "masks" / (std::to_string(r.sample) + "_" + cls + ".csv"),
                        heatmap_csv(r));
        maps.push_back(std::move(r));
      }
    }
  }
  write_text_file(dir / "figures" / "masks.svg", heatmap_svg(maps, names));
  o << "masks: " << maps.size() << " heatmaps -> " << (dir / "figures").generic_string();
  return o.str();
}

}  // namespace u2s
