#ifndef HANDEYE_COV_H
#define HANDEYE_COV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HecStatus {
  HEC_STATUS_OK = 0,
  HEC_STATUS_NULL_POINTER = 1,
  HEC_STATUS_INVALID_INPUT = 2,
  HEC_STATUS_DEGENERATE_MOTION = 3,
  HEC_STATUS_NO_CONVERGENCE = 4,
  HEC_STATUS_RANK_DEFICIENT = 5,
  HEC_STATUS_IO = 6,
  HEC_STATUS_INTERNAL = 7,
} HecStatus;

typedef struct HecDataset HecDataset;

typedef struct HecSolution HecSolution;

// A pose with its rotation (left perturbation, rad²) and translation (m²)
// covariances.
typedef struct HecPose {
  double rotation[9];
  double translation[3];
  double cov_rot[9];
  double cov_trans[9];
} HecPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *hec_version(void);

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *hec_last_error(void);

// Empty dataset.
struct HecDataset *hec_dataset_new(void);

// Reads a JSONL dataset file. Every pair must carry its covariances.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a valid pointer.
enum HecStatus hec_dataset_read(const char *path, struct HecDataset **out);

// Appends one (A, B) pair after validating rotations and covariances.
//
// # Safety
// `dataset` must come from this library; `a` and `b` must be valid.
enum HecStatus hec_dataset_add_pair(struct HecDataset *dataset,
                                    const struct HecPose *a,
                                    const struct HecPose *b);

// Number of pairs; 0 for NULL.
//
// # Safety
// `dataset` must be NULL or come from this library.
size_t hec_dataset_len(const struct HecDataset *dataset);

// # Safety
// `dataset` must be NULL or come from this library, and not be used again.
void hec_dataset_free(struct HecDataset *dataset);

// Solves AX = XB for the pairs of `dataset`.
//
// # Safety
// `dataset` must come from this library, `out` must be valid.
enum HecStatus hec_calibrate(const struct HecDataset *dataset, struct HecSolution **out);

// X with its covariances.
//
// # Safety
// `solution` must come from this library, `out` must be valid.
enum HecStatus hec_solution_pose(const struct HecSolution *solution, struct HecPose *out);

// Gauss-Newton iterations of the rotation and translation stages.
//
// # Safety
// `solution` must come from this library; the outputs must be valid.
enum HecStatus hec_solution_iterations(const struct HecSolution *solution,
                                       size_t *rotation,
                                       size_t *translation);

// # Safety
// `solution` must be NULL or come from this library, and not be used again.
void hec_solution_free(struct HecSolution *solution);

// `out = a · b` with propagated covariances.
//
// # Safety
// All pointers must be valid.
enum HecStatus hec_compound(const struct HecPose *a, const struct HecPose *b, struct HecPose *out);

// `out = poses[0] · poses[1] · … · poses[n-1]`.
//
// # Safety
// `poses` must point to `n` valid poses, `out` must be valid.
enum HecStatus hec_propagate_chain(const struct HecPose *poses, size_t n, struct HecPose *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HANDEYE_COV_H */
