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


#include "u2s/u2s.h"

#include <exception>
#include <filesystem>
#include <new>
#include <string>

#include "u2s/config.hpp"
#include "u2s/error.hpp"
#include "u2s/pipeline.hpp"

struct u2s_run {
  u2s::RunConfig config;
  u2s::CommandOptions options;
  std::string dir;
  std::string report;
};

namespace {

thread_local std::string g_last_error;

int record(int status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return U2S_OK;
  } catch (const u2s::Error& e) {
    return record(static_cast<int>(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return record(U2S_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return record(U2S_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return record(U2S_ERR_RUNTIME, e.what());
  }
}

int null_handle() { return record(U2S_ERR_INVALID_ARGUMENT, "null u2s_run handle"); }

int open_with(u2s::RunConfig config, u2s_run** out) {
  auto* run = new u2s_run{std::move(config), {}, {}, {}};
  run->dir = run->config.run_dir().generic_string();
  *out = run;
  return U2S_OK;
}

template <typename Fn>
int command(u2s_run* run, Fn&& fn) {
  if (!run) return null_handle();
  return guarded([&] { run->report = fn(); });
}

}  // namespace

extern "C" {

const char* u2s_version(void) { return "1.0.0"; }

const char* u2s_status_name(int status) {
  if (status == U2S_OK) return "ok";
  if (status < 1 || status > U2S_ERR_EMPTY_INPUT) return "unknown";
  return u2s::error_code_name(static_cast<u2s::ErrorCode>(status)).data();
}

const char* u2s_last_error(void) { return g_last_error.c_str(); }

int u2s_run_open(const char* config_path, u2s_run** out) {
  if (!config_path || !out) return record(U2S_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { open_with(u2s::load_run_config(config_path), out); });
}

int u2s_run_open_text(const char* toml_text, u2s_run** out) {
  if (!toml_text || !out) return record(U2S_ERR_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] { open_with(u2s::parse_run_config(toml_text), out); });
}

void u2s_run_close(u2s_run* run) { delete run; }

int u2s_run_set_checkpoint(u2s_run* run, const char* path) {
  if (!run) return null_handle();
  run->options.checkpoint.reset();
  if (path) run->options.checkpoint = std::filesystem::path(path);
  return U2S_OK;
}

int u2s_run_set_baseline(u2s_run* run, const char* path) {
  if (!run) return null_handle();
  run->options.baseline.reset();
  if (path) run->options.baseline = std::filesystem::path(path);
  return U2S_OK;
}

int u2s_run_set_force(u2s_run* run, int force) {
  if (!run) return null_handle();
  run->options.force = force != 0;
  return U2S_OK;
}

const char* u2s_run_dir(const u2s_run* run) { return run ? run->dir.c_str() : ""; }

unsigned long long u2s_run_fingerprint(const u2s_run* run) {
  return run ? run->config.fingerprint() : 0ULL;
}

const char* u2s_run_report(const u2s_run* run) { return run ? run->report.c_str() : ""; }

int u2s_gen_data(u2s_run* run) {
  return command(run, [&] { return u2s::run_gen_data(run->config); });
}

int u2s_train(u2s_run* run, const char* stage) {
  return command(run, [&] {
    std::optional<u2s::Stage> s;
    if (stage && std::string_view(stage) != "all") s = u2s::parse_stage(stage);
    return u2s::run_train(run->config, s, run->options);
  });
}

int u2s_build_csm(u2s_run* run) {
  return command(run, [&] { return u2s::run_build_csm(run->config, run->options); });
}

int u2s_eval(u2s_run* run) {
  return command(run, [&] { return u2s::run_eval(run->config, run->options); });
}

int u2s_ablate_fusion(u2s_run* run) {
  return command(run, [&] { return u2s::run_ablate_fusion(run->config, run->options); });
}

int u2s_ablate_reg(u2s_run* run) {
  return command(run, [&] { return u2s::run_ablate_reg(run->config, run->options); });
}

int u2s_sweep_n(u2s_run* run) {
  return command(run, [&] { return u2s::run_sweep_n(run->config, run->options); });
}

int u2s_export_figures(u2s_run* run) {
  return command(run, [&] { return u2s::run_export_figures(run->config, run->options); });
}

}  // extern "C"
