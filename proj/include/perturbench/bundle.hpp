#pragma once

#include <string>

#include "perturbench/types.hpp"

namespace pbench {

/// Loads a bundle directory (manifest.json, metadata.tsv, optional
/// expression.f32, embeddings/*.f32). Throws Error{validation} with the file
/// and field named on any shape, dtype, value, or cross-reference mismatch.
Dataset load_bundle(const std::string& dir);

/// Writes the bundle; float payloads are written little-endian row-major so
/// that save ∘ load is bit-exact. Raw-counts expression must be non-negative
/// integers (stored as float32).
void save_bundle(const Dataset& ds, const std::string& dir);

/// Validates without retaining payloads; returns a human-readable summary
/// (sample/gene/batch/perturbation counts, embeddings with dims).
std::string describe_bundle(const Dataset& ds);

/// Two-column TSV of gene pairs; '#' lines are comments. Self-links and
/// duplicates (either order) are dropped and counted. Empty result is an
/// error.
LinkDatabase load_link_db(const std::string& path, const std::string& name = "");

}  // namespace pbench
