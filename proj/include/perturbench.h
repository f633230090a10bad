/* C interface to the perturbench evaluation library.
 *
 * All functions return PB_OK (0) on success or a PB_E_* code; the thread-local
 * message from pb_last_error() describes the most recent failure. Strings
 * returned through char** out-parameters are heap-allocated; release them with
 * pb_string_free(). Handles are opaque; release with their _close function.
 */
#ifndef PERTURBENCH_H
#define PERTURBENCH_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define PB_OK 0
#define PB_E_IO 1          /* filesystem / byte-level failure */
#define PB_E_VALIDATION 2  /* bundle or input contract violation */
#define PB_E_CONFIG 3      /* bad configuration */
#define PB_E_COMPUTE 4     /* numerical failure */
#define PB_E_CELLS 5       /* pipeline finished but some cells errored */

typedef struct pb_dataset pb_dataset;

const char* pb_version(void);
const char* pb_last_error(void);
void pb_string_free(char* s);

/* --- bundles --------------------------------------------------------- */

int pb_dataset_open(const char* dir, pb_dataset** out);
void pb_dataset_close(pb_dataset* ds);
int pb_dataset_describe(const pb_dataset* ds, char** out_text);
int pb_dataset_save(const pb_dataset* ds, const char* dir);

/* Drops rows whose raw count total is <= min_total. */
int pb_dataset_filter(pb_dataset* ds, double min_total);
/* Library-size normalization to target_sum then ln(1+x); layout becomes lognorm. */
int pb_dataset_normalize(pb_dataset* ds, double target_sum);

/* kind: "probe" or "reconstruction"; holdout_frac ignored for probe. */
int pb_dataset_make_split(const pb_dataset* ds, const char* kind, double train_frac,
                          double holdout_frac, uint64_t seed, char** out_split_json);

/* method: "pca" (fit on expression) or "random". Adds embeddings/<name>. */
int pb_dataset_embed(pb_dataset* ds, const char* method, const char* name, int dim,
                     uint64_t seed);

/* mode: "center", "center_scale" or "tvn"; center_mode: "per_batch_control"
 * or "global_control" (ignored for tvn). Adds embeddings/<out_name>. */
int pb_dataset_postprocess(pb_dataset* ds, const char* embedding, const char* mode,
                           const char* center_mode, const char* out_name);

/* --- synthetic data --------------------------------------------------- */

/* config_json: SynthConfig fields; writes a bundle plus true_links.tsv and
 * silent_targets.txt into out_dir. */
int pb_synth_generate(const char* config_json, const char* out_dir);

/* --- evaluation ------------------------------------------------------- */

/* config_json: RunConfig. Writes report files into the configured output
 * directory (if any) and returns the report as JSON. Returns PB_E_CELLS when
 * the run completed but at least one evaluation cell failed. */
int pb_run(const char* config_json, char** out_report_json);

/* Renders a report JSON (as returned by pb_run) to TSV. */
int pb_report_tsv(const char* report_json, char** out_tsv);

#ifdef __cplusplus
}
#endif

#endif /* PERTURBENCH_H */
