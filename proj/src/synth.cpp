#include "perturbench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "perturbench/bundle.hpp"
#include "perturbench/common.hpp"
#include "perturbench/parallel.hpp"
#include "perturbench/rng.hpp"

using nlohmann::json;

namespace pbench {

namespace {

const char* kConfigKeys[] = {"n_batches",     "cells_per_batch",
                             "n_perturbations", "n_genes",
                             "latent_dim",    "n_modules",
                             "batch_effect_scale", "perturbation_effect_scale",
                             "noise_scale",   "zero_inflation",
                             "dispersion",    "library_size_mean",
                             "n_silent_targets", "seed"};

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::config, "synth config: " + m); };
  if (c.n_batches < 1) fail("n_batches must be >= 1");
  if (c.n_perturbations < 1) fail("n_perturbations must be >= 1");
  if (c.cells_per_batch < c.n_perturbations + 1) {
    fail("cells_per_batch must be >= n_perturbations + 1 so every batch sees every label");
  }
  if (c.n_genes < c.n_perturbations) fail("n_genes must be >= n_perturbations (one target each)");
  if (c.latent_dim < 1) fail("latent_dim must be >= 1");
  if (c.n_silent_targets < 0 || c.n_silent_targets > c.n_perturbations) {
    fail("n_silent_targets must be in [0, n_perturbations]");
  }
  int active = c.n_perturbations - c.n_silent_targets;
  if (active > 0 && (c.n_modules < 1 || c.n_modules > active)) {
    fail("n_modules must be in [1, active perturbations]");
  }
  if (!(c.zero_inflation >= 0.0 && c.zero_inflation < 1.0)) fail("zero_inflation must be in [0, 1)");
  if (!(c.dispersion > 0.0)) fail("dispersion must be positive");
  if (!(c.library_size_mean > 0.0)) fail("library_size_mean must be positive");
  if (c.batch_effect_scale < 0 || c.perturbation_effect_scale < 0 || c.noise_scale < 0) {
    fail("effect scales must be non-negative");
  }
}

VecD unit_normal(Rng& rng, int dim) {
  VecD v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  double n = v.norm();
  return n > 0 ? VecD(v / n) : v;
}

std::string gene_name(int j) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "G%05d", j);
  return buf;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

std::string SynthConfig::to_json() const {
  json j;
  j["n_batches"] = n_batches;
  j["cells_per_batch"] = cells_per_batch;
  j["n_perturbations"] = n_perturbations;
  j["n_genes"] = n_genes;
  j["latent_dim"] = latent_dim;
  j["n_modules"] = n_modules;
  j["batch_effect_scale"] = batch_effect_scale;
  j["perturbation_effect_scale"] = perturbation_effect_scale;
  j["noise_scale"] = noise_scale;
  j["zero_inflation"] = zero_inflation;
  j["dispersion"] = dispersion;
  j["library_size_mean"] = library_size_mean;
  j["n_silent_targets"] = n_silent_targets;
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

SynthConfig SynthConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, std::string("synth config parse error: ") + e.what());
  }
  std::set<std::string> known(std::begin(kConfigKeys), std::end(kConfigKeys));
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw Error(ErrorCode::config, "synth config: unknown field '" + key + "'");
    }
  }
  SynthConfig c;
  c.n_batches = j.value("n_batches", c.n_batches);
  c.cells_per_batch = j.value("cells_per_batch", c.cells_per_batch);
  c.n_perturbations = j.value("n_perturbations", c.n_perturbations);
  c.n_genes = j.value("n_genes", c.n_genes);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.n_modules = j.value("n_modules", c.n_modules);
  c.batch_effect_scale = j.value("batch_effect_scale", c.batch_effect_scale);
  c.perturbation_effect_scale = j.value("perturbation_effect_scale", c.perturbation_effect_scale);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.zero_inflation = j.value("zero_inflation", c.zero_inflation);
  c.dispersion = j.value("dispersion", c.dispersion);
  c.library_size_mean = j.value("library_size_mean", c.library_size_mean);
  c.n_silent_targets = j.value("n_silent_targets", c.n_silent_targets);
  c.seed = j.value("seed", c.seed);
  return c;
}

SynthData generate_synth(const SynthConfig& cfg) {
  validate(cfg);
  const int P = cfg.n_perturbations;
  const int active = P - cfg.n_silent_targets;
  const int L = cfg.latent_dim;
  const int G = cfg.n_genes;
  const int64_t n = static_cast<int64_t>(cfg.n_batches) * cfg.cells_per_batch;

  // Structural parameters come from dedicated streams so cell draws stay
  // counter-based and thread-independent.
  Rng base(mix64(cfg.seed ^ 0x57A97ULL));
  Rng struct_rng = base.stream(1ULL << 40);

  std::vector<VecD> batch_offset(cfg.n_batches);
  for (int b = 0; b < cfg.n_batches; ++b) {
    batch_offset[b] = cfg.batch_effect_scale * unit_normal(struct_rng, L);
  }
  std::vector<VecD> module_dir(std::max(1, cfg.n_modules));
  for (auto& m : module_dir) m = unit_normal(struct_rng, L);

  // Perturbation p targets gene p; active perturbations share their module's
  // direction up to a small private tilt, silent ones have no effect at all.
  std::vector<VecD> effect(P, VecD::Zero(L));
  std::vector<int> module_idx(P, -1);
  for (int p = 0; p < active; ++p) {
    int m = p % cfg.n_modules;
    module_idx[p] = m;
    VecD tilt = unit_normal(struct_rng, L);
    VecD dir = module_dir[m] + 0.25 * tilt;
    effect[p] = cfg.perturbation_effect_scale * (dir / dir.norm());
  }

  MatD loadings(L, G);
  double inv_sqrt_l = 1.0 / std::sqrt(static_cast<double>(L));
  for (int j = 0; j < G; ++j) {
    for (int l = 0; l < L; ++l) loadings(l, j) = struct_rng.normal() * inv_sqrt_l;
  }
  VecD baseline(G);
  for (int j = 0; j < G; ++j) baseline(j) = 0.5 * struct_rng.normal();

  std::vector<uint8_t> silent_gene(G, 0);
  for (int p = active; p < P; ++p) silent_gene[p] = 1;

  Dataset ds;
  ds.control_label = "non-targeting";
  ExpressionMatrix expr;
  expr.layout = ExprLayout::raw_counts;
  for (int j = 0; j < G; ++j) expr.gene_ids.push_back(gene_name(j));
  expr.values.resize(n, G);
  MatF latent(n, L);

  ds.meta.sample_id.resize(n);
  ds.meta.perturbation.resize(n);
  ds.meta.batch.resize(n);
  ds.meta.is_control.resize(n);
  ds.meta.cell_line.assign(n, "CL0");

  const double target_lib = cfg.library_size_mean / (1.0 - cfg.zero_inflation);

  parallel_for(static_cast<size_t>(n), [&](size_t idx) {
    int64_t i = static_cast<int64_t>(idx);
    int b = static_cast<int>(i / cfg.cells_per_batch);
    int c = static_cast<int>(i % cfg.cells_per_batch);
    int slot = c % (P + 1);  // 0 => control, else perturbation slot-1
    int pert = slot - 1;

    char sid[24];
    std::snprintf(sid, sizeof(sid), "s%08lld", static_cast<long long>(i));
    ds.meta.sample_id[i] = sid;
    ds.meta.batch[i] = "batch" + std::to_string(b);
    if (pert < 0) {
      ds.meta.perturbation[i] = ds.control_label;
      ds.meta.is_control[i] = 1;
    } else {
      ds.meta.perturbation[i] = expr.gene_ids[pert];
      ds.meta.is_control[i] = 0;
    }

    Rng cell = base.stream(idx);
    VecD z = batch_offset[b];
    if (pert >= 0) z += effect[pert];
    for (int l = 0; l < L; ++l) z(l) += cfg.noise_scale * cell.normal();
    for (int l = 0; l < L; ++l) latent(i, l) = static_cast<float>(z(l));

    VecD rate(G);
    double total = 0.0;
    for (int j = 0; j < G; ++j) {
      double r = softplus(baseline(j) + z.dot(loadings.col(j)));
      if (silent_gene[j]) r *= 1e-8;
      rate(j) = r;
      total += r;
    }
    double scale = target_lib / total;
    for (int j = 0; j < G; ++j) {
      double mu = rate(j) * scale;
      double w = cell.gamma(cfg.dispersion) * (mu / cfg.dispersion);
      int64_t y = cell.poisson(w);
      if (cfg.zero_inflation > 0 && cell.bernoulli(cfg.zero_inflation)) y = 0;
      expr.values(i, j) = static_cast<float>(y);
    }
  });

  ds.meta.reindex();
  ds.expression = std::move(expr);
  EmbeddingMatrix latent_emb;
  latent_emb.values = std::move(latent);
  latent_emb.provenance = "synthetic generative latent";
  ds.embeddings.emplace("true_latent", std::move(latent_emb));

  SynthData out;
  out.dataset = std::move(ds);
  for (int p = 0; p < P; ++p) {
    out.module_of.push_back(module_idx[p] >= 0 ? "m" + std::to_string(module_idx[p]) : "");
  }
  for (int p = active; p < P; ++p) out.silent_targets.push_back(gene_name(p));
  for (int a = 0; a < active; ++a) {
    for (int b = a + 1; b < active; ++b) {
      if (module_idx[a] == module_idx[b]) {
        out.true_links.emplace_back(gene_name(a), gene_name(b));
      }
    }
  }
  std::sort(out.true_links.begin(), out.true_links.end());
  return out;
}

void save_synth(const SynthData& data, const std::string& dir) {
  save_bundle(data.dataset, dir);
  std::filesystem::path root(dir);
  std::ostringstream links;
  links << "# within-module perturbation target pairs\n";
  for (const auto& [a, b] : data.true_links) links << a << '\t' << b << '\n';
  write_text_file((root / "true_links.tsv").string(), links.str());
  std::ostringstream silent;
  for (const auto& g : data.silent_targets) silent << g << '\n';
  write_text_file((root / "silent_targets.txt").string(), silent.str());
}

}  // namespace pbench
