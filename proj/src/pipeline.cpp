#include "perturbench/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "perturbench/bundle.hpp"
#include "perturbench/common.hpp"
#include "perturbench/consistency.hpp"
#include "perturbench/embedders.hpp"
#include "perturbench/knn.hpp"
#include "perturbench/mixing.hpp"
#include "perturbench/postprocess.hpp"
#include "perturbench/preprocess.hpp"
#include "perturbench/probe.hpp"
#include "perturbench/recall.hpp"
#include "perturbench/reconstruction.hpp"
#include "perturbench/rng.hpp"

using nlohmann::json;

namespace pbench {

namespace {

const std::set<std::string> kTasks = {"mixing", "probe",  "consistency",
                                      "knn",    "recall", "reconstruction"};
const std::set<std::string> kPosts = {"raw", "center", "center_scale", "tvn"};

void check_known_keys(const json& j, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw Error(ErrorCode::config, std::string(where) + ": unknown field '" + key + "'");
    }
  }
}

json params_to_json(const RunParams& p) {
  json j;
  j["perplexity"] = p.perplexity;
  j["mixing_neighbors"] = p.mixing_neighbors;
  j["knn_k"] = p.knn_k;
  j["topn"] = p.topn;
  j["alpha"] = p.alpha;
  j["null_threshold"] = p.null_threshold;
  j["min_null"] = p.min_null;
  j["tail"] = p.tail;
  j["probe_epochs"] = p.probe_epochs;
  j["probe_batch"] = p.probe_batch;
  j["probe_lr"] = p.probe_lr;
  j["recon_epochs"] = p.recon_epochs;
  j["recon_batch"] = p.recon_batch;
  j["recon_lr"] = p.recon_lr;
  j["recon_relu"] = p.recon_relu;
  j["low_pct"] = p.low_pct;
  j["high_pct"] = p.high_pct;
  j["center_mode"] = p.center_mode;
  return j;
}

RunParams params_from_json(const json& j) {
  check_known_keys(j, {"perplexity", "mixing_neighbors", "knn_k", "topn", "alpha",
                       "null_threshold", "min_null", "tail", "probe_epochs", "probe_batch",
                       "probe_lr", "recon_epochs", "recon_batch", "recon_lr", "recon_relu",
                       "low_pct", "high_pct", "center_mode"},
                   "params");
  RunParams p;
  p.perplexity = j.value("perplexity", p.perplexity);
  p.mixing_neighbors = j.value("mixing_neighbors", p.mixing_neighbors);
  p.knn_k = j.value("knn_k", p.knn_k);
  p.topn = j.value("topn", p.topn);
  p.alpha = j.value("alpha", p.alpha);
  p.null_threshold = j.value("null_threshold", p.null_threshold);
  p.min_null = j.value("min_null", p.min_null);
  p.tail = j.value("tail", p.tail);
  p.probe_epochs = j.value("probe_epochs", p.probe_epochs);
  p.probe_batch = j.value("probe_batch", p.probe_batch);
  p.probe_lr = j.value("probe_lr", p.probe_lr);
  p.recon_epochs = j.value("recon_epochs", p.recon_epochs);
  p.recon_batch = j.value("recon_batch", p.recon_batch);
  p.recon_lr = j.value("recon_lr", p.recon_lr);
  p.recon_relu = j.value("recon_relu", p.recon_relu);
  p.low_pct = j.value("low_pct", p.low_pct);
  p.high_pct = j.value("high_pct", p.high_pct);
  p.center_mode = j.value("center_mode", p.center_mode);
  if (p.tail != "right" && p.tail != "left_as_printed") {
    throw Error(ErrorCode::config, "params.tail must be 'right' or 'left_as_printed'");
  }
  if (p.center_mode != "per_batch_control" && p.center_mode != "global_control") {
    throw Error(ErrorCode::config,
                "params.center_mode must be 'per_batch_control' or 'global_control'");
  }
  if (p.topn.empty()) throw Error(ErrorCode::config, "params.topn must not be empty");
  return p;
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["bundle"] = bundle_dir;
  j["embeddings"] = embeddings;
  j["post_processing"] = post_processing;
  j["tasks"] = tasks;
  j["probe_split"] = probe_split_path;
  j["recon_split"] = recon_split_path;
  j["link_dbs"] = link_db_paths;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  j["params"] = params_to_json(params);
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("run config parse error: ") + e.what());
  }
  check_known_keys(j,
                   {"bundle", "embeddings", "post_processing", "tasks", "probe_split",
                    "recon_split", "link_dbs", "seeds", "output_dir", "params"},
                   "run config");
  RunConfig c;
  if (!j.contains("bundle")) throw Error(ErrorCode::config, "run config: 'bundle' is required");
  c.bundle_dir = j["bundle"].get<std::string>();
  if (j.contains("embeddings")) c.embeddings = j["embeddings"].get<std::vector<std::string>>();
  if (j.contains("post_processing")) {
    c.post_processing = j["post_processing"].get<std::vector<std::string>>();
  }
  if (j.contains("tasks")) c.tasks = j["tasks"].get<std::vector<std::string>>();
  c.probe_split_path = j.value("probe_split", std::string());
  c.recon_split_path = j.value("recon_split", std::string());
  if (j.contains("link_dbs")) c.link_db_paths = j["link_dbs"].get<std::vector<std::string>>();
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
  c.output_dir = j.value("output_dir", std::string());
  if (j.contains("params")) c.params = params_from_json(j["params"]);

  for (const auto& t : c.tasks) {
    if (!kTasks.count(t)) throw Error(ErrorCode::config, "run config: unknown task '" + t + "'");
  }
  for (const auto& p : c.post_processing) {
    if (!kPosts.count(p)) {
      throw Error(ErrorCode::config, "run config: unknown post_processing '" + p + "'");
    }
  }
  if (c.tasks.empty()) throw Error(ErrorCode::config, "run config: no tasks requested");
  if (c.post_processing.empty()) {
    throw Error(ErrorCode::config, "run config: no post_processing modes requested");
  }
  if (c.seeds.empty()) throw Error(ErrorCode::config, "run config: no seeds given");
  {
    std::set<uint64_t> uniq(c.seeds.begin(), c.seeds.end());
    if (uniq.size() != c.seeds.size()) {
      throw Error(ErrorCode::config, "run config: duplicate seeds");
    }
  }
  return c;
}

// --- report rendering ------------------------------------------------------

namespace {

std::string tsv_escape_guard(const std::string& s) {
  if (s.find_first_of("\t\n\r") != std::string::npos) {
    throw Error(ErrorCode::validation, "report field contains tab/newline: " + s);
  }
  return s;
}

}  // namespace

std::string MetricReport::to_tsv() const {
  std::ostringstream out;
  out << "embedding\tpost_processing\ttask\tmetric\tmean\tstd\tn_seeds\tnote\n";
  for (const auto& r : rows) {
    out << tsv_escape_guard(r.embedding) << '\t' << tsv_escape_guard(r.post_processing) << '\t'
        << tsv_escape_guard(r.task) << '\t' << tsv_escape_guard(r.metric) << '\t'
        << format_g6(r.mean) << '\t' << format_g6(r.stddev) << '\t' << r.per_seed.size() << '\t'
        << tsv_escape_guard(r.note) << '\n';
  }
  return out.str();
}

std::string MetricReport::per_seed_tsv() const {
  std::ostringstream out;
  out << "embedding\tpost_processing\ttask\tmetric\tseed_index\tvalue\n";
  for (const auto& r : rows) {
    for (size_t s = 0; s < r.per_seed.size(); ++s) {
      out << r.embedding << '\t' << r.post_processing << '\t' << r.task << '\t' << r.metric
          << '\t' << s << '\t' << format_g6(r.per_seed[s]) << '\n';
    }
  }
  return out.str();
}

std::string MetricReport::to_json() const {
  json j;
  j["config"] = json::parse(config_json);
  j["n_cell_errors"] = n_cell_errors;
  json rows_j = json::array();
  for (const auto& r : rows) {
    json rj;
    rj["embedding"] = r.embedding;
    rj["post_processing"] = r.post_processing;
    rj["task"] = r.task;
    rj["metric"] = r.metric;
    rj["mean"] = r.mean;
    rj["std"] = r.stddev;
    rj["per_seed"] = r.per_seed;
    rj["note"] = r.note;
    rows_j.push_back(rj);
  }
  j["rows"] = rows_j;
  return j.dump(2) + "\n";
}

std::string report_json_to_tsv(const std::string& report_json) {
  json j;
  try {
    j = json::parse(report_json);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, std::string("report json parse error: ") + e.what());
  }
  auto as_double = [](const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  MetricReport rep;
  rep.n_cell_errors = j.value("n_cell_errors", size_t{0});
  for (const auto& rj : j.at("rows")) {
    ReportRow r;
    r.embedding = rj.at("embedding").get<std::string>();
    r.post_processing = rj.at("post_processing").get<std::string>();
    r.task = rj.at("task").get<std::string>();
    r.metric = rj.at("metric").get<std::string>();
    r.mean = as_double(rj.at("mean"));
    r.stddev = as_double(rj.at("std"));
    for (const auto& v : rj.at("per_seed")) r.per_seed.push_back(as_double(v));
    r.note = rj.value("note", std::string());
    rep.rows.push_back(std::move(r));
  }
  return rep.to_tsv();
}

void emit_report(const MetricReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory " + dir);
  std::filesystem::path root(dir);
  write_text_file((root / "report.tsv").string(), report.to_tsv());
  write_text_file((root / "report.json").string(), report.to_json());
  write_text_file((root / "report_per_seed.tsv").string(), report.per_seed_tsv());
}

// --- pipeline ---------------------------------------------------------------

namespace {

struct CellKey {
  std::string embedding, post, task, metric;
  bool operator<(const CellKey& o) const {
    return std::tie(embedding, post, task, metric) < std::tie(o.embedding, o.post, o.task, o.metric);
  }
};

struct TaskContext {
  const Dataset& ds;
  const RunConfig& cfg;
  const SplitSpec* probe_split = nullptr;
  const SplitSpec* recon_split = nullptr;
  const std::vector<LinkDatabase>* dbs = nullptr;
  const MatD* lognorm = nullptr;                       // expression targets
  const std::set<std::string>* null_perts = nullptr;   // consistency null set
};

// Contiguous label coding over rows shared by both split sides.
struct ProbeData {
  MatD train_x, test_x;
  std::vector<int32_t> train_y, test_y;
  int n_classes = 0;
};

ProbeData build_probe_data(const MatD& emb, const Metadata& meta, const SplitSpec& split) {
  auto train_rows = split.train_rows(meta);
  auto test_rows = split.test_rows(meta);
  if (train_rows.empty() || test_rows.empty()) {
    throw Error(ErrorCode::validation, "probe split leaves an empty side");
  }
  std::set<std::string> labels;
  for (int32_t r : train_rows) labels.insert(meta.perturbation[r]);
  std::map<std::string, int32_t> code;
  for (const auto& l : labels) {
    code.emplace(l, static_cast<int32_t>(code.size()));
  }
  ProbeData out;
  out.n_classes = static_cast<int>(code.size());
  if (out.n_classes < 2) {
    throw Error(ErrorCode::validation, "probe task needs at least 2 perturbation labels");
  }
  out.train_x.resize(static_cast<int64_t>(train_rows.size()), emb.cols());
  out.test_x.resize(static_cast<int64_t>(test_rows.size()), emb.cols());
  for (size_t i = 0; i < train_rows.size(); ++i) {
    out.train_x.row(static_cast<int64_t>(i)) = emb.row(train_rows[i]);
    out.train_y.push_back(code.at(meta.perturbation[train_rows[i]]));
  }
  for (size_t i = 0; i < test_rows.size(); ++i) {
    out.test_x.row(static_cast<int64_t>(i)) = emb.row(test_rows[i]);
    auto it = code.find(meta.perturbation[test_rows[i]]);
    if (it == code.end()) {
      throw Error(ErrorCode::validation,
                  "probe split: test label '" + meta.perturbation[test_rows[i]] +
                      "' missing from train side");
    }
    out.test_y.push_back(it->second);
  }
  return out;
}

MatF compute_post(const MatF& emb, const Metadata& meta, const std::string& post,
                  CenterMode mode) {
  if (post == "raw") return emb;
  if (post == "center") return center_embedding(emb, meta, mode);
  if (post == "center_scale") return center_scale_embedding(emb, meta, mode);
  if (post == "tvn") return apply_tvn(fit_tvn(emb, meta), emb);
  throw Error(ErrorCode::config, "unknown post_processing '" + post + "'");
}

// metric name -> per-seed values for one (embedding, post, task) cell.
using CellValues = std::vector<std::pair<std::string, std::vector<double>>>;

CellValues run_task(const std::string& task, const MatD& emb, const TaskContext& ctx) {
  const Metadata& meta = ctx.ds.meta;
  const RunParams& prm = ctx.cfg.params;
  const auto& seeds = ctx.cfg.seeds;
  CellValues out;

  if (task == "mixing") {
    int b = static_cast<int>(meta.batch_names.size());
    if (b < 2) {
      throw Error(ErrorCode::validation, "mixing task needs at least 2 batches");
    }
    MixingOptions mo;
    mo.perplexity = prm.perplexity;
    mo.neighbors = prm.mixing_neighbors;
    std::vector<double> score, raw, batch_norm;
    for (uint64_t seed : seeds) {
      auto res = ilisi_vs_random(emb, meta.batch_idx, b, seed, mo);
      score.push_back(res.score);
      raw.push_back(res.observed.raw);
      batch_norm.push_back(res.observed.normalized);
    }
    out.emplace_back("ilisi", score);
    out.emplace_back("ilisi_raw", raw);
    out.emplace_back("ilisi_batch_norm", batch_norm);
    return out;
  }

  if (task == "probe") {
    if (ctx.probe_split == nullptr) {
      throw Error(ErrorCode::config, "probe task requires probe_split");
    }
    ProbeData data = build_probe_data(emb, meta, *ctx.probe_split);
    std::vector<std::vector<double>> acc(prm.topn.size());
    for (uint64_t seed : seeds) {
      ProbeOptions po;
      po.epochs = prm.probe_epochs;
      po.batch_size = prm.probe_batch;
      po.lr = prm.probe_lr;
      po.seed = seed;
      ProbeModel model = train_probe(data.train_x, data.train_y, data.n_classes, po);
      auto a = topk_accuracy(model, data.test_x, data.test_y, prm.topn);
      for (size_t i = 0; i < a.size(); ++i) acc[i].push_back(a[i]);
    }
    for (size_t i = 0; i < prm.topn.size(); ++i) {
      out.emplace_back("top" + std::to_string(prm.topn[i]), acc[i]);
    }
    return out;
  }

  if (task == "knn") {
    if (ctx.probe_split == nullptr) {
      throw Error(ErrorCode::config, "knn task requires probe_split");
    }
    ProbeData data = build_probe_data(emb, meta, *ctx.probe_split);
    KnnOptions ko;
    ko.k = prm.knn_k;
    auto res = knn_accuracy(data.train_x, data.train_y, data.test_x, data.test_y, prm.topn, ko);
    for (size_t i = 0; i < prm.topn.size(); ++i) {
      out.emplace_back("top" + std::to_string(prm.topn[i]),
                       std::vector<double>(seeds.size(), res.topn[i]));
    }
    return out;
  }

  if (task == "consistency") {
    if (ctx.null_perts == nullptr) {
      throw Error(ErrorCode::validation,
                  "consistency task requires expression data for null selection");
    }
    ConsistencyOptions co;
    co.alpha = prm.alpha;
    co.tail = prm.tail == "right" ? TestTail::right : TestTail::left_as_printed;
    auto res = consistency_test(emb, meta, *ctx.null_perts, co);
    out.emplace_back("fraction_significant",
                     std::vector<double>(seeds.size(), res.fraction_significant));
    return out;
  }

  if (task == "recall") {
    if (ctx.dbs == nullptr || ctx.dbs->empty()) {
      throw Error(ErrorCode::config, "recall task requires at least one link database");
    }
    auto cs = aggregate_embeddings(emb, meta, false);
    auto pred = predicted_links(cs, prm.low_pct, prm.high_pct);
    for (const auto& db : *ctx.dbs) {
      auto res = link_recall(pred, db, cs.labels);
      out.emplace_back("recall:" + db.name, std::vector<double>(seeds.size(), res.recall));
    }
    return out;
  }

  if (task == "reconstruction") {
    if (ctx.recon_split == nullptr) {
      throw Error(ErrorCode::config, "reconstruction task requires recon_split");
    }
    if (ctx.lognorm == nullptr) {
      throw Error(ErrorCode::validation, "reconstruction task requires expression data");
    }
    auto train_rows = ctx.recon_split->train_rows(meta);
    auto test_rows = ctx.recon_split->test_rows(meta);
    if (train_rows.empty() || test_rows.empty()) {
      throw Error(ErrorCode::validation, "reconstruction split leaves an empty side");
    }
    MatD train_x(static_cast<int64_t>(train_rows.size()), emb.cols());
    MatD train_y(static_cast<int64_t>(train_rows.size()), ctx.lognorm->cols());
    for (size_t i = 0; i < train_rows.size(); ++i) {
      train_x.row(static_cast<int64_t>(i)) = emb.row(train_rows[i]);
      train_y.row(static_cast<int64_t>(i)) = ctx.lognorm->row(train_rows[i]);
    }
    MatD test_x(static_cast<int64_t>(test_rows.size()), emb.cols());
    MatD test_y(static_cast<int64_t>(test_rows.size()), ctx.lognorm->cols());
    for (size_t i = 0; i < test_rows.size(); ++i) {
      test_x.row(static_cast<int64_t>(i)) = emb.row(test_rows[i]);
      test_y.row(static_cast<int64_t>(i)) = ctx.lognorm->row(test_rows[i]);
    }
    Metadata test_meta = meta.subset(test_rows);

    std::vector<double> spearman, integrity;
    for (uint64_t seed : seeds) {
      DecoderOptions dopts;
      dopts.epochs = prm.recon_epochs;
      dopts.batch_size = prm.recon_batch;
      dopts.lr = prm.recon_lr;
      dopts.relu = prm.recon_relu;
      dopts.seed = seed;
      DecoderModel model = train_decoder(train_x, train_y, dopts);
      MatD pred = decode(model, test_x);
      spearman.push_back(spearman_score(pred, test_y, false));
      integrity.push_back(structural_integrity(pred, test_y, test_meta).integrity);
    }
    out.emplace_back("spearman", spearman);
    out.emplace_back("structural_integrity", integrity);
    return out;
  }

  throw Error(ErrorCode::config, "unknown task '" + task + "'");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

MetricReport run_pipeline(const RunConfig& config) {
  Dataset ds = load_bundle(config.bundle_dir);

  std::vector<std::string> embeddings = config.embeddings;
  if (embeddings.empty()) {
    for (const auto& [name, _] : ds.embeddings) embeddings.push_back(name);
  }
  if (embeddings.empty()) {
    throw Error(ErrorCode::validation, "bundle has no embeddings to evaluate");
  }
  for (const auto& name : embeddings) {
    if (!ds.embeddings.count(name)) {
      throw Error(ErrorCode::config, "embedding '" + name + "' not present in bundle");
    }
  }

  SplitSpec probe_split, recon_split;
  bool has_probe_split = false, has_recon_split = false;
  if (!config.probe_split_path.empty()) {
    probe_split = SplitSpec::from_json(read_text_file(config.probe_split_path));
    has_probe_split = true;
  }
  if (!config.recon_split_path.empty()) {
    recon_split = SplitSpec::from_json(read_text_file(config.recon_split_path));
    has_recon_split = true;
  }
  std::vector<LinkDatabase> dbs;
  for (const auto& path : config.link_db_paths) dbs.push_back(load_link_db(path));

  bool need_expr = false;
  for (const auto& t : config.tasks) {
    if (t == "consistency" || t == "reconstruction") need_expr = true;
  }
  MatD lognorm;
  std::set<std::string> null_perts;
  bool has_lognorm = false, has_nulls = false;
  std::string expr_error;
  if (need_expr && ds.expression) {
    try {
      if (ds.expression->layout == ExprLayout::raw_counts) {
        lognorm = normalize_log1p(ds.expression.value()).values.cast<double>();
      } else {
        lognorm = ds.expression->values.cast<double>();
      }
      has_lognorm = true;
    } catch (const Error& e) {
      expr_error = e.what();
    }
  }
  bool need_nulls =
      std::count(config.tasks.begin(), config.tasks.end(), std::string("consistency")) > 0;
  std::string null_error;
  if (need_nulls && ds.expression) {
    try {
      auto sel = select_null_perturbations(ds.expression.value(), ds.meta,
                                           config.params.null_threshold,
                                           static_cast<size_t>(config.params.min_null));
      null_perts = std::move(sel.null_perturbations);
      has_nulls = true;
    } catch (const Error& e) {
      null_error = e.what();
    }
  } else if (need_nulls) {
    null_error = "bundle has no expression payload";
  }

  MetricReport report;
  report.config_json = config.to_json();

  // (embedding, post, task) cells; failures annotate rather than abort.
  for (const auto& emb_name : embeddings) {
    const MatF& base = ds.embeddings.at(emb_name).values;
    CenterMode mode = config.params.center_mode == "global_control"
                          ? CenterMode::global_control
                          : CenterMode::per_batch_control;
    for (const auto& post : config.post_processing) {
      MatD processed;
      std::string post_error;
      try {
        processed = compute_post(base, ds.meta, post, mode).cast<double>();
      } catch (const std::exception& e) {
        post_error = e.what();
      }
      for (const auto& task : config.tasks) {
        ReportRow err_row;
        err_row.embedding = emb_name;
        err_row.post_processing = post;
        err_row.task = task;
        err_row.metric = "error";
        err_row.mean = std::numeric_limits<double>::quiet_NaN();
        err_row.stddev = std::numeric_limits<double>::quiet_NaN();
        if (!post_error.empty()) {
          err_row.note = post_error;
          report.rows.push_back(err_row);
          report.n_cell_errors++;
          continue;
        }
        try {
          TaskContext ctx{ds, config};
          if (has_probe_split) ctx.probe_split = &probe_split;
          if (has_recon_split) ctx.recon_split = &recon_split;
          ctx.dbs = &dbs;
          if (task == "reconstruction") {
            if (!has_lognorm) {
              throw Error(ErrorCode::validation,
                          expr_error.empty() ? "bundle has no expression payload" : expr_error);
            }
            ctx.lognorm = &lognorm;
          }
          if (task == "consistency") {
            if (!has_nulls) throw Error(ErrorCode::validation, null_error);
            ctx.null_perts = &null_perts;
          }
          CellValues values = run_task(task, processed, ctx);
          for (const auto& [metric, per_seed] : values) {
            ReportRow row;
            row.embedding = emb_name;
            row.post_processing = post;
            row.task = task;
            row.metric = metric;
            row.per_seed = per_seed;
            row.mean = mean_of(per_seed);
            row.stddev = std_of(per_seed, row.mean);
            report.rows.push_back(row);
          }
        } catch (const std::exception& e) {
          err_row.note = e.what();
          report.rows.push_back(err_row);
          report.n_cell_errors++;
        }
      }
    }
  }

  // Best-over-post-processing per (embedding, task, metric); all reported
  // metrics are higher-is-better.
  {
    std::map<CellKey, const ReportRow*> best;
    for (const auto& r : report.rows) {
      if (r.metric == "error") continue;
      CellKey key{r.embedding, "", r.task, r.metric};
      auto it = best.find(key);
      if (it == best.end() || r.mean > it->second->mean) best[key] = &r;
    }
    std::vector<ReportRow> best_rows;
    for (const auto& [key, row] : best) {
      ReportRow b = *row;
      b.note = "from " + row->post_processing;
      b.post_processing = "best";
      best_rows.push_back(b);
    }
    for (auto& b : best_rows) report.rows.push_back(std::move(b));
  }

  // Deterministic row order: embedding, task, metric in config/request order,
  // post-processing sweep order with "best" last.
  {
    auto index_of = [](const std::vector<std::string>& v, const std::string& s) {
      for (size_t i = 0; i < v.size(); ++i) {
        if (v[i] == s) return i;
      }
      return v.size();
    };
    std::vector<std::string> posts = config.post_processing;
    posts.push_back("best");
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [&](const ReportRow& a, const ReportRow& b) {
                       size_t ea = index_of(embeddings, a.embedding);
                       size_t eb = index_of(embeddings, b.embedding);
                       if (ea != eb) return ea < eb;
                       size_t ta = index_of(config.tasks, a.task);
                       size_t tb = index_of(config.tasks, b.task);
                       if (ta != tb) return ta < tb;
                       if (a.metric != b.metric) return a.metric < b.metric;
                       return index_of(posts, a.post_processing) < index_of(posts, b.post_processing);
                     });
  }

  if (!config.output_dir.empty()) emit_report(report, config.output_dir);
  return report;
}

}  // namespace pbench
