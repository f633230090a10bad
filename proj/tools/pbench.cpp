// Command-line front end; talks to the library exclusively through the C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "perturbench.h"

using nlohmann::json;

namespace {

int fail(int rc) {
  std::cerr << "error: " << pb_last_error() << "\n";
  return rc == PB_E_CELLS ? 2 : 1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(1);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool spill(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return false;
  out << content;
  return static_cast<bool>(out);
}

struct DatasetHandle {
  pb_dataset* ds = nullptr;
  ~DatasetHandle() { pb_dataset_close(ds); }
};

struct StringOut {
  char* s = nullptr;
  ~StringOut() { pb_string_free(s); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perturbation-screen embedding benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pb_version()));

  // validate
  std::string v_bundle;
  auto* validate = app.add_subcommand("validate", "check a bundle directory and summarize it");
  validate->add_option("bundle", v_bundle, "bundle directory")->required();

  // preprocess
  std::string pp_bundle, pp_out;
  double pp_min_counts = 1000.0, pp_target = 1e4;
  bool pp_normalize = false;
  auto* preprocess =
      app.add_subcommand("preprocess", "filter low-count samples; optionally normalize");
  preprocess->add_option("bundle", pp_bundle, "bundle directory")->required();
  preprocess->add_option("--out", pp_out, "output bundle directory")->required();
  preprocess->add_option("--min-counts", pp_min_counts,
                         "keep samples with raw count sum strictly above this");
  preprocess->add_flag("--normalize", pp_normalize,
                       "apply library-size normalization and ln(1+x)");
  preprocess->add_option("--target-sum", pp_target, "library size target for --normalize");

  // split
  std::string sp_bundle, sp_kind = "probe", sp_out;
  double sp_train = 0.7, sp_holdout = 0.5;
  uint64_t sp_seed = 0;
  auto* split = app.add_subcommand("split", "generate a batch-level train/test split");
  split->add_option("bundle", sp_bundle, "bundle directory")->required();
  split->add_option("--kind", sp_kind, "probe or reconstruction")
      ->check(CLI::IsMember({"probe", "reconstruction"}));
  split->add_option("--train-frac", sp_train, "target train row fraction");
  split->add_option("--holdout-frac", sp_holdout,
                    "perturbation holdout fraction (reconstruction only)");
  split->add_option("--seed", sp_seed, "shuffle seed");
  split->add_option("--out", sp_out, "output split json")->required();

  // embed
  std::string em_bundle, em_method = "pca", em_name;
  int em_dim = 256;
  uint64_t em_seed = 0;
  auto* embed = app.add_subcommand("embed", "add a baseline embedding to a bundle");
  embed->add_option("bundle", em_bundle, "bundle directory")->required();
  embed->add_option("--method", em_method, "pca or random")
      ->check(CLI::IsMember({"pca", "random"}));
  embed->add_option("--dim", em_dim, "embedding dimension");
  embed->add_option("--seed", em_seed, "seed");
  embed->add_option("--name", em_name, "embedding name (default: method name)");

  // postprocess
  std::string po_bundle, po_emb, po_mode = "center", po_center = "per_batch_control", po_name;
  auto* post = app.add_subcommand("postprocess", "add a post-processed embedding to a bundle");
  post->add_option("bundle", po_bundle, "bundle directory")->required();
  post->add_option("--embedding", po_emb, "source embedding name")->required();
  post->add_option("--mode", po_mode, "center, center_scale or tvn")
      ->check(CLI::IsMember({"center", "center_scale", "tvn"}));
  post->add_option("--center-mode", po_center, "per_batch_control or global_control")
      ->check(CLI::IsMember({"per_batch_control", "global_control"}));
  post->add_option("--name", po_name, "output embedding name (default: <mode>_<embedding>)");

  // synth
  std::string sy_config, sy_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic screen bundle");
  synth->add_option("--config", sy_config, "synth config json (defaults when omitted)");
  synth->add_option("--out", sy_out, "output bundle directory")->required();

  // eval
  std::string ev_task = "all";
  std::string ev_bundle, ev_probe_split, ev_recon_split, ev_out, ev_config;
  std::vector<std::string> ev_embeddings, ev_posts, ev_dbs;
  std::vector<uint64_t> ev_seeds;
  bool ev_print = false;
  json ev_params = json::object();
  auto* eval = app.add_subcommand("eval", "run evaluation tasks and write a report");
  eval->add_option("task", ev_task,
                   "mixing|probe|consistency|knn|recall|reconstruction|all");
  eval->add_option("--config", ev_config, "full run-config json (overrides other flags)");
  eval->add_option("--bundle", ev_bundle, "bundle directory");
  eval->add_option("--embedding", ev_embeddings, "embedding names (default: all in bundle)");
  eval->add_option("--post", ev_posts, "post-processing sweep (raw center center_scale tvn)");
  eval->add_option("--probe-split", ev_probe_split, "probe split json path");
  eval->add_option("--recon-split", ev_recon_split, "reconstruction split json path");
  eval->add_option("--db", ev_dbs, "link database TSV (repeatable)");
  eval->add_option("--seeds", ev_seeds, "seeds (default 0 1 2 3 4)")->delimiter(',');
  eval->add_option("--out", ev_out, "output directory for report files");
  eval->add_flag("--print", ev_print, "print the report TSV to stdout");
  double ev_perplexity = -1, ev_alpha = -1, ev_null_thr = -1, ev_low = -1, ev_high = -1;
  int ev_knn_k = -1, ev_min_null = -1, ev_probe_epochs = -1, ev_recon_epochs = -1;
  std::string ev_tail, ev_center_mode;
  eval->add_option("--perplexity", ev_perplexity, "mixing kernel perplexity");
  eval->add_option("--knn-k", ev_knn_k, "kNN neighbor count (0 = sqrt of reference size)");
  eval->add_option("--alpha", ev_alpha, "consistency significance level");
  eval->add_option("--null-threshold", ev_null_thr, "unexpressed-gene mean lognorm threshold");
  eval->add_option("--min-null", ev_min_null, "minimum null perturbation count");
  eval->add_option("--tail", ev_tail, "consistency test tail: right or left_as_printed");
  eval->add_option("--probe-epochs", ev_probe_epochs, "probe training epochs");
  eval->add_option("--recon-epochs", ev_recon_epochs, "decoder training epochs");
  eval->add_option("--low-pct", ev_low, "link prediction low percentile");
  eval->add_option("--high-pct", ev_high, "link prediction high percentile");
  eval->add_option("--center-mode", ev_center_mode, "per_batch_control or global_control");

  // report
  std::string rp_in, rp_out = "-";
  auto* report = app.add_subcommand("report", "render a report json as TSV");
  report->add_option("--in", rp_in, "report json path")->required();
  report->add_option("--out", rp_out, "output path or - for stdout");

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    DatasetHandle h;
    if (int rc = pb_dataset_open(v_bundle.c_str(), &h.ds); rc != PB_OK) return fail(rc);
    StringOut text;
    if (int rc = pb_dataset_describe(h.ds, &text.s); rc != PB_OK) return fail(rc);
    std::cout << text.s;
    return 0;
  }

  if (preprocess->parsed()) {
    DatasetHandle h;
    if (int rc = pb_dataset_open(pp_bundle.c_str(), &h.ds); rc != PB_OK) return fail(rc);
    if (int rc = pb_dataset_filter(h.ds, pp_min_counts); rc != PB_OK) return fail(rc);
    if (pp_normalize) {
      if (int rc = pb_dataset_normalize(h.ds, pp_target); rc != PB_OK) return fail(rc);
    }
    if (int rc = pb_dataset_save(h.ds, pp_out.c_str()); rc != PB_OK) return fail(rc);
    std::cout << "wrote " << pp_out << "\n";
    return 0;
  }

  if (split->parsed()) {
    DatasetHandle h;
    if (int rc = pb_dataset_open(sp_bundle.c_str(), &h.ds); rc != PB_OK) return fail(rc);
    StringOut js;
    if (int rc = pb_dataset_make_split(h.ds, sp_kind.c_str(), sp_train, sp_holdout, sp_seed,
                                       &js.s);
        rc != PB_OK) {
      return fail(rc);
    }
    if (!spill(sp_out, js.s)) {
      std::cerr << "error: cannot write " << sp_out << "\n";
      return 1;
    }
    std::cout << "wrote " << sp_out << "\n";
    return 0;
  }

  if (embed->parsed()) {
    if (em_name.empty()) em_name = em_method;
    DatasetHandle h;
    if (int rc = pb_dataset_open(em_bundle.c_str(), &h.ds); rc != PB_OK) return fail(rc);
    if (int rc = pb_dataset_embed(h.ds, em_method.c_str(), em_name.c_str(), em_dim, em_seed);
        rc != PB_OK) {
      return fail(rc);
    }
    if (int rc = pb_dataset_save(h.ds, em_bundle.c_str()); rc != PB_OK) return fail(rc);
    std::cout << "added embedding '" << em_name << "' to " << em_bundle << "\n";
    return 0;
  }

  if (post->parsed()) {
    if (po_name.empty()) po_name = po_mode + "_" + po_emb;
    DatasetHandle h;
    if (int rc = pb_dataset_open(po_bundle.c_str(), &h.ds); rc != PB_OK) return fail(rc);
    if (int rc = pb_dataset_postprocess(h.ds, po_emb.c_str(), po_mode.c_str(),
                                        po_center.c_str(), po_name.c_str());
        rc != PB_OK) {
      return fail(rc);
    }
    if (int rc = pb_dataset_save(h.ds, po_bundle.c_str()); rc != PB_OK) return fail(rc);
    std::cout << "added embedding '" << po_name << "' to " << po_bundle << "\n";
    return 0;
  }

  if (synth->parsed()) {
    std::string cfg = sy_config.empty() ? "{}" : slurp(sy_config);
    if (int rc = pb_synth_generate(cfg.c_str(), sy_out.c_str()); rc != PB_OK) return fail(rc);
    std::cout << "wrote synthetic bundle to " << sy_out << "\n";
    return 0;
  }

  if (eval->parsed()) {
    std::string config_text;
    if (!ev_config.empty()) {
      config_text = slurp(ev_config);
    } else {
      if (ev_bundle.empty()) {
        std::cerr << "error: --bundle (or --config) is required\n";
        return 1;
      }
      json cfg;
      cfg["bundle"] = ev_bundle;
      if (!ev_embeddings.empty()) cfg["embeddings"] = ev_embeddings;
      if (!ev_posts.empty()) cfg["post_processing"] = ev_posts;
      if (ev_task != "all") cfg["tasks"] = std::vector<std::string>{ev_task};
      if (!ev_probe_split.empty()) cfg["probe_split"] = ev_probe_split;
      if (!ev_recon_split.empty()) cfg["recon_split"] = ev_recon_split;
      if (!ev_dbs.empty()) cfg["link_dbs"] = ev_dbs;
      if (!ev_seeds.empty()) cfg["seeds"] = ev_seeds;
      if (!ev_out.empty()) cfg["output_dir"] = ev_out;
      json params = json::object();
      if (ev_perplexity >= 0) params["perplexity"] = ev_perplexity;
      if (ev_knn_k >= 0) params["knn_k"] = ev_knn_k;
      if (ev_alpha >= 0) params["alpha"] = ev_alpha;
      if (ev_null_thr >= 0) params["null_threshold"] = ev_null_thr;
      if (ev_min_null >= 0) params["min_null"] = ev_min_null;
      if (!ev_tail.empty()) params["tail"] = ev_tail;
      if (ev_probe_epochs >= 0) params["probe_epochs"] = ev_probe_epochs;
      if (ev_recon_epochs >= 0) params["recon_epochs"] = ev_recon_epochs;
      if (ev_low >= 0) params["low_pct"] = ev_low;
      if (ev_high >= 0) params["high_pct"] = ev_high;
      if (!ev_center_mode.empty()) params["center_mode"] = ev_center_mode;
      if (!params.empty()) cfg["params"] = params;
      config_text = cfg.dump();
    }
    StringOut report_json;
    int rc = pb_run(config_text.c_str(), &report_json.s);
    if (rc != PB_OK && rc != PB_E_CELLS) return fail(rc);
    if (ev_print || ev_out.empty()) {
      StringOut tsv;
      if (int rc2 = pb_report_tsv(report_json.s, &tsv.s); rc2 != PB_OK) return fail(rc2);
      std::cout << tsv.s;
    }
    if (rc == PB_E_CELLS) {
      std::cerr << "completed with cell errors: " << pb_last_error() << "\n";
      return 2;
    }
    return 0;
  }

  if (report->parsed()) {
    std::string text = slurp(rp_in);
    StringOut tsv;
    if (int rc = pb_report_tsv(text.c_str(), &tsv.s); rc != PB_OK) return fail(rc);
    if (rp_out == "-") {
      std::cout << tsv.s;
    } else if (!spill(rp_out, tsv.s)) {
      std::cerr << "error: cannot write " << rp_out << "\n";
      return 1;
    }
    return 0;
  }

  return 0;
}
