#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Evaluation-wide knobs with the defaults used throughout; every field can
/// be overridden from the JSON config ("params" object).
struct RunParams {
  double perplexity = 30.0;
  int mixing_neighbors = 0;       // 0 => 3 * perplexity
  int knn_k = 0;                  // 0 => floor(sqrt(n_reference))
  std::vector<int> topn = {1, 5};
  double alpha = 0.05;
  double null_threshold = 0.01;
  int min_null = 100;
  std::string tail = "right";     // or "left_as_printed"
  int probe_epochs = 250;
  int probe_batch = 2048;
  double probe_lr = 1e-3;
  int recon_epochs = 30;
  int recon_batch = 512;
  double recon_lr = 1e-4;
  bool recon_relu = false;
  double low_pct = 5.0;
  double high_pct = 95.0;
  std::string center_mode = "per_batch_control";  // or "global_control"
};

struct RunConfig {
  std::string bundle_dir;
  std::vector<std::string> embeddings;       // empty => every embedding in the bundle
  std::vector<std::string> post_processing = {"raw", "center", "center_scale", "tvn"};
  std::vector<std::string> tasks = {"mixing", "probe",  "consistency",
                                    "knn",    "recall", "reconstruction"};
  std::string probe_split_path;
  std::string recon_split_path;
  std::vector<std::string> link_db_paths;
  std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string output_dir;
  RunParams params;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

/// One aggregated report cell. post_processing is one of the sweep names or
/// "best"; "best" rows carry the winning sweep name in note. Error cells have
/// metric "error", NaN values and the message in note.
struct ReportRow {
  std::string embedding;
  std::string post_processing;
  std::string task;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_seed;
  std::string note;
};

struct MetricReport {
  std::vector<ReportRow> rows;
  size_t n_cell_errors = 0;
  std::string config_json;  // echo of the resolved config

  std::string to_tsv() const;       // stable order, %.6g floats
  std::string to_json() const;
  std::string per_seed_tsv() const;
};

/// Runs every requested (embedding, post-processing, task) cell over all
/// seeds. Cell failures are isolated: the cell gets an error row and the run
/// continues. When output_dir is set, writes report.tsv / report.json /
/// report_per_seed.tsv (byte-identical across reruns of the same config).
MetricReport run_pipeline(const RunConfig& config);

void emit_report(const MetricReport& report, const std::string& dir);

/// Parses report JSON (as produced by MetricReport::to_json) back into rows
/// and renders the TSV form.
std::string report_json_to_tsv(const std::string& report_json);

}  // namespace pbench
