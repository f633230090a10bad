#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perturbench/types.hpp"

namespace pbench {

/// Zero-inflated negative-binomial screen simulator with planted structure:
/// latent factors carry batch offsets and module-shared perturbation effects,
/// counts follow a gamma-Poisson mixture with a Bernoulli dropout mask.
struct SynthConfig {
  int n_batches = 4;
  int cells_per_batch = 512;     // must exceed n_perturbations (labels cycle round-robin)
  int n_perturbations = 40;      // non-control labels; each targets one gene
  int n_genes = 200;
  int latent_dim = 16;
  int n_modules = 8;             // perturbations share effect direction within a module
  double batch_effect_scale = 1.0;
  double perturbation_effect_scale = 1.0;
  double noise_scale = 1.0;
  double zero_inflation = 0.3;
  double dispersion = 2.0;       // gamma shape; smaller => heavier overdispersion
  double library_size_mean = 5000.0;
  int n_silent_targets = 0;      // trailing perturbations: zero effect, silenced target gene
  uint64_t seed = 0;

  std::string to_json() const;
  static SynthConfig from_json(const std::string& text);
};

struct SynthData {
  Dataset dataset;               // raw counts + metadata + "true_latent" embedding
  std::vector<std::pair<std::string, std::string>> true_links;  // within-module centroid pairs
  std::vector<std::string> silent_targets;                      // gene ids
  std::vector<std::string> module_of;  // per non-control perturbation, "" for silent
};

/// Deterministic for a fixed config: every cell draws from its own counter
/// derived stream, so outputs are independent of threading and platform.
SynthData generate_synth(const SynthConfig& cfg);

/// Writes bundle plus true_links.tsv and silent_targets.txt beside it.
void save_synth(const SynthData& data, const std::string& dir);

}  // namespace pbench
