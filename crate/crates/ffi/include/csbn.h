#ifndef CSBN_H
#define CSBN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Estimation method.
typedef enum {
  CSBN_METHOD_PCD_NAIVE = 0,
  CSBN_METHOD_PCD_CORRECTED = 1,
  CSBN_METHOD_NPS = 2,
} CsbnMethod;

// Result codes.
typedef enum {
  CSBN_STATUS_OK = 0,
  CSBN_STATUS_NULL_POINTER = 1,
  CSBN_STATUS_INVALID_ARGUMENT = 2,
  CSBN_STATUS_VALIDATION = 3,
  CSBN_STATUS_NUMERICAL = 4,
  CSBN_STATUS_PARSE = 5,
  CSBN_STATUS_IO = 6,
  CSBN_STATUS_PANIC = 7,
} CsbnStatus;

// Opaque data set handle.
typedef struct CsbnDataSet CsbnDataSet;

// Opaque measurement-error covariance handle.
typedef struct CsbnErrorSpec CsbnErrorSpec;

// Opaque fit result handle.
typedef struct CsbnFit CsbnFit;

// Solver settings. Obtain defaults from [`csbn_fit_options_default`].
typedef struct {
  double lambda;
  double scad_a;
  double outer_tol;
  size_t max_outer_iters;
  double nr_tol;
  size_t nr_max_iters;
  double zero_threshold;
} CsbnFitOptions;

// Graph recovery metrics. `frob_scaled` is always filled.
typedef struct {
  double tpr;
  double fdr;
  double specificity;
  double correctness;
  double frob_scaled;
  size_t true_positives;
  size_t reversed;
  size_t spurious;
  size_t estimated_edges;
  size_t true_edges;
} CsbnGraphEval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null after a success.
// The pointer stays valid until the next library call on the same thread.
const char *csbn_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *csbn_version(void);

// Builds a data set from an `n × p` row-major matrix. `interventions` holds
// `n` entries: the zero-based intervened node, or -1 for an observational
// row. Passing null for `interventions` marks every row observational.
//
// # Safety
// `w` must point to `n·p` doubles and `interventions`, when not null, to `n`
// integers. `out` must be a valid pointer.
CsbnStatus csbn_dataset_new(const double *w,
                            size_t n,
                            size_t p,
                            const int64_t *interventions,
                            CsbnDataSet **out);

// Releases a data set. Null is ignored.
//
// # Safety
// `ds` must come from [`csbn_dataset_new`] and not be freed twice.
void csbn_dataset_free(CsbnDataSet *ds);

// Builds Σ_u from a `p × p` row-major matrix; it must be symmetric PSD.
//
// # Safety
// `sigma` must point to `p·p` doubles; `out` must be a valid pointer.
CsbnStatus csbn_error_spec_new(const double *sigma, size_t p, CsbnErrorSpec **out);

// Releases an error specification. Null is ignored.
//
// # Safety
// `es` must come from [`csbn_error_spec_new`] and not be freed twice.
void csbn_error_spec_free(CsbnErrorSpec *es);

// Fills `out` with the library defaults (λ = 0.1, a = 3.7).
//
// # Safety
// `out` must be a valid pointer.
CsbnStatus csbn_fit_options_default(CsbnFitOptions *out);

// Fits at the λ in `options`. `method` is a `CsbnMethod` value; `es` may be
// null for the naive method.
//
// # Safety
// Handles must be live; `options` and `out` must be valid pointers.
CsbnStatus csbn_fit(int32_t method,
                    const CsbnDataSet *ds,
                    const CsbnErrorSpec *es,
                    const CsbnFitOptions *options,
                    CsbnFit **out);

// Fits along the default λ grid and keeps the selected fit: SIC for the
// corrected methods, RCP (α = 0.1) for the naive one. `options.lambda` is
// ignored.
//
// # Safety
// As for [`csbn_fit`].
CsbnStatus csbn_fit_auto(int32_t method,
                         const CsbnDataSet *ds,
                         const CsbnErrorSpec *es,
                         const CsbnFitOptions *options,
                         CsbnFit **out);

// Releases a fit. Null is ignored.
//
// # Safety
// `fit` must come from [`csbn_fit`] or [`csbn_fit_auto`] and not be freed twice.
void csbn_fit_free(CsbnFit *fit);

// Number of nodes in a fit.
//
// # Safety
// `fit` must be live and `out` valid.
CsbnStatus csbn_fit_nodes(const CsbnFit *fit, size_t *out);

// λ the fit was computed at.
//
// # Safety
// `fit` must be live and `out` valid.
CsbnStatus csbn_fit_lambda(const CsbnFit *fit, double *out);

// Whether the outer loop met its tolerance before the iteration cap.
//
// # Safety
// `fit` must be live and `out` valid.
CsbnStatus csbn_fit_converged(const CsbnFit *fit, bool *out);

// Copies B̂ row-major into `out` (`len` ≥ p·p). Entry (i, j) is the effect
// of node i on node j.
//
// # Safety
// `fit` must be live and `out` must hold `len` doubles.
CsbnStatus csbn_fit_coefficients(const CsbnFit *fit, double *out, size_t len);

// Copies the topological order (p zero-based nodes) into `out`.
//
// # Safety
// `fit` must be live and `out` must hold `len` values.
CsbnStatus csbn_fit_order(const CsbnFit *fit, size_t *out, size_t len);

// SCAD penalty P_λ(|t|) with shape parameter `a` > 2.
//
// # Safety
// `out` must be a valid pointer.
CsbnStatus csbn_scad(double t, double lambda, double a, double *out);

// Compares an estimated coefficient matrix with the truth (both `p × p`
// row-major). Entries with magnitude ≤ `threshold` count as absent.
//
// # Safety
// Both matrices must hold `p·p` doubles; `out` must be valid.
CsbnStatus csbn_evaluate(const double *b_hat,
                         const double *b_true,
                         size_t p,
                         double threshold,
                         CsbnGraphEval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSBN_H */
