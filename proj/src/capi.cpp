#include "perturbench.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "perturbench/bundle.hpp"
#include "perturbench/common.hpp"
#include "perturbench/embedders.hpp"
#include "perturbench/pipeline.hpp"
#include "perturbench/postprocess.hpp"
#include "perturbench/preprocess.hpp"
#include "perturbench/synth.hpp"

#define PB_EXPORT __attribute__((visibility("default")))

namespace {

thread_local std::string g_last_error;

int code_of(const pbench::Error& e) {
  switch (e.code()) {
    case pbench::ErrorCode::io:
      return PB_E_IO;
    case pbench::ErrorCode::validation:
      return PB_E_VALIDATION;
    case pbench::ErrorCode::config:
      return PB_E_CONFIG;
    case pbench::ErrorCode::compute:
      return PB_E_COMPUTE;
  }
  return PB_E_COMPUTE;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const pbench::Error& e) {
    g_last_error = e.what();
    return code_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PB_E_COMPUTE;
  } catch (...) {
    g_last_error = "unknown error";
    return PB_E_COMPUTE;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int require_out(void* p) {
  if (p == nullptr) {
    g_last_error = "null output pointer";
    return PB_E_CONFIG;
  }
  return PB_OK;
}

}  // namespace

struct pb_dataset {
  pbench::Dataset ds;
};

extern "C" {

PB_EXPORT const char* pb_version(void) { return "0.1.0"; }

PB_EXPORT const char* pb_last_error(void) { return g_last_error.c_str(); }

PB_EXPORT void pb_string_free(char* s) { std::free(s); }

PB_EXPORT int pb_dataset_open(const char* dir, pb_dataset** out) {
  if (int rc = require_out(out); rc != PB_OK) return rc;
  if (dir == nullptr) {
    g_last_error = "null directory";
    return PB_E_CONFIG;
  }
  *out = nullptr;
  return guarded([&] {
    auto* handle = new pb_dataset{pbench::load_bundle(dir)};
    *out = handle;
    return PB_OK;
  });
}

PB_EXPORT void pb_dataset_close(pb_dataset* ds) { delete ds; }

PB_EXPORT int pb_dataset_describe(const pb_dataset* ds, char** out_text) {
  if (int rc = require_out(out_text); rc != PB_OK) return rc;
  if (ds == nullptr) {
    g_last_error = "null dataset handle";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    *out_text = dup_string(pbench::describe_bundle(ds->ds));
    return *out_text ? PB_OK : PB_E_COMPUTE;
  });
}

PB_EXPORT int pb_dataset_save(const pb_dataset* ds, const char* dir) {
  if (ds == nullptr || dir == nullptr) {
    g_last_error = "null argument";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    pbench::save_bundle(ds->ds, dir);
    return PB_OK;
  });
}

PB_EXPORT int pb_dataset_filter(pb_dataset* ds, double min_total) {
  if (ds == nullptr) {
    g_last_error = "null dataset handle";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    if (!ds->ds.expression) {
      throw pbench::Error(pbench::ErrorCode::validation, "bundle has no expression payload");
    }
    auto keep = pbench::filter_min_counts(ds->ds.expression.value(), min_total);
    ds->ds = pbench::apply_row_mask(ds->ds, keep);
    return PB_OK;
  });
}

PB_EXPORT int pb_dataset_normalize(pb_dataset* ds, double target_sum) {
  if (ds == nullptr) {
    g_last_error = "null dataset handle";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    if (!ds->ds.expression) {
      throw pbench::Error(pbench::ErrorCode::validation, "bundle has no expression payload");
    }
    ds->ds.expression = pbench::normalize_log1p(ds->ds.expression.value(), target_sum);
    return PB_OK;
  });
}

PB_EXPORT int pb_dataset_make_split(const pb_dataset* ds, const char* kind, double train_frac,
                                    double holdout_frac, uint64_t seed, char** out_split_json) {
  if (int rc = require_out(out_split_json); rc != PB_OK) return rc;
  if (ds == nullptr || kind == nullptr) {
    g_last_error = "null argument";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    std::string k(kind);
    pbench::SplitSpec spec;
    if (k == "probe") {
      spec = pbench::make_probe_split(ds->ds.meta, train_frac, seed);
    } else if (k == "reconstruction") {
      spec = pbench::make_recon_split(ds->ds.meta, train_frac, holdout_frac, seed);
    } else {
      throw pbench::Error(pbench::ErrorCode::config,
                          "split kind must be 'probe' or 'reconstruction'");
    }
    *out_split_json = dup_string(spec.to_json());
    return *out_split_json ? PB_OK : PB_E_COMPUTE;
  });
}

PB_EXPORT int pb_dataset_embed(pb_dataset* ds, const char* method, const char* name, int dim,
                               uint64_t seed) {
  if (ds == nullptr || method == nullptr || name == nullptr) {
    g_last_error = "null argument";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    std::string m(method);
    pbench::EmbeddingMatrix emb;
    if (m == "pca") {
      if (!ds->ds.expression) {
        throw pbench::Error(pbench::ErrorCode::validation, "pca requires expression data");
      }
      pbench::PcaOptions opts;
      opts.seed = seed;
      auto model = pbench::fit_pca(ds->ds.expression->values, dim, opts);
      emb.values = pbench::pca_transform(model, ds->ds.expression->values);
      emb.provenance = "pca(dim=" + std::to_string(dim) + ", seed=" + std::to_string(seed) + ")";
    } else if (m == "random") {
      emb.values = pbench::random_embedding(static_cast<int64_t>(ds->ds.n_samples()), dim, seed);
      emb.provenance =
          "random(dim=" + std::to_string(dim) + ", seed=" + std::to_string(seed) + ")";
    } else {
      throw pbench::Error(pbench::ErrorCode::config, "method must be 'pca' or 'random'");
    }
    ds->ds.embeddings[name] = std::move(emb);
    return PB_OK;
  });
}

PB_EXPORT int pb_dataset_postprocess(pb_dataset* ds, const char* embedding, const char* mode,
                                     const char* center_mode, const char* out_name) {
  if (ds == nullptr || embedding == nullptr || mode == nullptr || out_name == nullptr) {
    g_last_error = "null argument";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    auto it = ds->ds.embeddings.find(embedding);
    if (it == ds->ds.embeddings.end()) {
      throw pbench::Error(pbench::ErrorCode::config,
                          std::string("embedding '") + embedding + "' not found");
    }
    pbench::CenterMode cm = pbench::CenterMode::per_batch_control;
    if (center_mode != nullptr && std::string(center_mode) == "global_control") {
      cm = pbench::CenterMode::global_control;
    }
    std::string m(mode);
    pbench::EmbeddingMatrix out;
    if (m == "center") {
      out.values = pbench::center_embedding(it->second.values, ds->ds.meta, cm);
    } else if (m == "center_scale") {
      out.values = pbench::center_scale_embedding(it->second.values, ds->ds.meta, cm);
    } else if (m == "tvn") {
      out.values = pbench::apply_tvn(pbench::fit_tvn(it->second.values, ds->ds.meta),
                                     it->second.values);
    } else {
      throw pbench::Error(pbench::ErrorCode::config,
                          "mode must be 'center', 'center_scale' or 'tvn'");
    }
    out.provenance = m + "(" + embedding + ")";
    ds->ds.embeddings[out_name] = std::move(out);
    return PB_OK;
  });
}

PB_EXPORT int pb_synth_generate(const char* config_json, const char* out_dir) {
  if (config_json == nullptr || out_dir == nullptr) {
    g_last_error = "null argument";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    auto cfg = pbench::SynthConfig::from_json(config_json);
    auto data = pbench::generate_synth(cfg);
    pbench::save_synth(data, out_dir);
    return PB_OK;
  });
}

PB_EXPORT int pb_run(const char* config_json, char** out_report_json) {
  if (int rc = require_out(out_report_json); rc != PB_OK) return rc;
  if (config_json == nullptr) {
    g_last_error = "null config";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    auto cfg = pbench::RunConfig::from_json(config_json);
    auto report = pbench::run_pipeline(cfg);
    *out_report_json = dup_string(report.to_json());
    if (*out_report_json == nullptr) return PB_E_COMPUTE;
    if (report.n_cell_errors > 0) {
      g_last_error = std::to_string(report.n_cell_errors) + " evaluation cells failed";
      return PB_E_CELLS;
    }
    return PB_OK;
  });
}

PB_EXPORT int pb_report_tsv(const char* report_json, char** out_tsv) {
  if (int rc = require_out(out_tsv); rc != PB_OK) return rc;
  if (report_json == nullptr) {
    g_last_error = "null report";
    return PB_E_CONFIG;
  }
  return guarded([&] {
    *out_tsv = dup_string(pbench::report_json_to_tsv(report_json));
    return *out_tsv ? PB_OK : PB_E_COMPUTE;
  });
}

}  // extern "C"
