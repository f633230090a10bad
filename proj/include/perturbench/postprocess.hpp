#pragma once

#include <string>

#include "perturbench/types.hpp"

namespace pbench {

enum class CenterMode { per_batch_control, global_control };

/// Subtracts the control-sample mean (per batch or pooled). A batch without
/// control samples falls back to the global control mean with a warning.
MatF center_embedding(const MatF& emb, const Metadata& meta, CenterMode mode);

/// Centering followed by division by the control standard deviation of each
/// dimension. Dimensions with (near-)zero control spread are zeroed with a
/// warning rather than amplified.
MatF center_scale_embedding(const MatF& emb, const Metadata& meta, CenterMode mode);

/// Typical-variation normalization fitted on pooled controls: standardize by
/// control mean/std, then whiten with T = W D^{-1/2} W^T from the
/// eigendecomposition of the control covariance. Eigenvalues are floored at
/// 1e-6 * lambda_max so rank-deficient control sets stay finite.
struct TvnTransform {
  VecD mean;     // control mean
  VecD scale;    // control std (floored)
  MatD whiten;   // symmetric d x d
};

TvnTransform fit_tvn(const MatF& emb, const Metadata& meta);
MatF apply_tvn(const TvnTransform& t, const MatF& emb);

}  // namespace pbench
