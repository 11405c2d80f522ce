#ifndef REGION_ATLAS_H
#define REGION_ATLAS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RaStatus {
  RA_STATUS_OK = 0,
  RA_STATUS_NULL_POINTER = 1,
  RA_STATUS_INVALID_ARGUMENT = 2,
  RA_STATUS_INVALID_UTF8 = 3,
  /*
   A hypothesis of the requested construction does not hold.
   */
  RA_STATUS_HYPOTHESIS = 4,
  /*
   Input exceeds the exact counter's caps; use the estimator.
   */
  RA_STATUS_CAP_EXCEEDED = 5,
  RA_STATUS_SOLVER = 6,
  RA_STATUS_IO = 7,
  RA_STATUS_PANIC = 8,
} RaStatus;

/*
 Opaque graph with its normalized adjacency.
 */
typedef struct RaGraph RaGraph;

/*
 Opaque network: architecture, parameters and the graph it runs on.
 */
typedef struct RaNetwork RaNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *ra_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void ra_string_free(char *s);

/*
 Named fixture graph (`path3`, `star3`, `fig2_graph4`, `triangle3`, `single1`).

 # Safety
 `name` must be a NUL-terminated string; `out` must be writable.
 */
enum RaStatus ra_graph_fixture(const char *name, struct RaGraph **out);

/*
 Graph from JSON `{"nodes": n, "edges": [[i, j], ...]}` with 0-based nodes.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum RaStatus ra_graph_from_json(const char *json, struct RaGraph **out);

/*
 Graph from `edge_count` pairs stored flat in `edges` (0-based).

 # Safety
 `edges` must point to `2 * edge_count` values; `out` must be writable.
 */
enum RaStatus ra_graph_from_edges(size_t nodes,
                                  const size_t *edges,
                                  size_t edge_count,
                                  struct RaGraph **out);

/*
 Node count, or 0 for a null handle.

 # Safety
 `g` must be null or a live graph handle.
 */
size_t ra_graph_node_count(const struct RaGraph *g);

/*
 # Safety
 `g` must be null or a graph handle not yet freed.
 */
void ra_graph_free(struct RaGraph *g);

/*
 Bound report for `widths` on `g`, as JSON.

 # Safety
 `widths` must point to `len` values; `out_json` must be writable.
 */
enum RaStatus ra_bounds_json(const struct RaGraph *g,
                             const size_t *widths,
                             size_t len,
                             char **out_json);

/*
 Network with Kaiming-initialized parameters drawn from `seed`.

 # Safety
 `widths` must point to `len` values; `out` must be writable.
 */
enum RaStatus ra_network_kaiming(const struct RaGraph *g,
                                 const size_t *widths,
                                 size_t len,
                                 uint64_t seed,
                                 struct RaNetwork **out);

/*
 Lower-bound witness network; `seed` drives the generic last layer.

 # Safety
 `widths` must point to `len` values; `out` must be writable.
 */
enum RaStatus ra_network_witness(const struct RaGraph *g,
                                 const size_t *widths,
                                 size_t len,
                                 uint64_t seed,
                                 struct RaNetwork **out);

/*
 Network with parameters from JSON `{"weights": [...], "biases": [...]}`.

 # Safety
 `widths` must point to `len` values; `json` must be NUL-terminated;
 `out` must be writable.
 */
enum RaStatus ra_network_from_json(const struct RaGraph *g,
                                   const size_t *widths,
                                   size_t len,
                                   const char *json,
                                   struct RaNetwork **out);

/*
 Parameters of `n` as JSON.

 # Safety
 `n` must be a live network handle; `out_json` must be writable.
 */
enum RaStatus ra_network_params_json(const struct RaNetwork *n, char **out_json);

/*
 Length of the input vector (nodes × input features), or 0 for null.

 # Safety
 `n` must be null or a live network handle.
 */
size_t ra_network_input_dim(const struct RaNetwork *n);

/*
 Number of neurons (nodes × hidden and output widths), or 0 for null.

 # Safety
 `n` must be null or a live network handle.
 */
size_t ra_network_neuron_count(const struct RaNetwork *n);

/*
 # Safety
 `n` must be null or a network handle not yet freed.
 */
void ra_network_free(struct RaNetwork *n);

/*
 Activation pattern of the row-major input `x` (`nodes × N_0`): writes 1
 (active) or 0 per neuron into `out_signs`, ordered by layer, node, feature.

 # Safety
 `x` must point to `x_len` values and `out_signs` to `out_len` bytes.
 */
enum RaStatus ra_activation_pattern(const struct RaNetwork *n,
                                    const double *x,
                                    size_t x_len,
                                    uint8_t *out_signs,
                                    size_t out_len);

/*
 Exact region count inside the box `[−box, box]^d`, as a decimal string.

 # Safety
 `n` must be a live network handle; `out_count` must be writable.
 */
enum RaStatus ra_exact_count(const struct RaNetwork *n, double bound, char **out_count);

/*
 Monte Carlo estimate as JSON. `dist` is `normal:<sigma>` or
 `uniform:<u>`; null runs every standard distribution with `samples` each.

 # Safety
 `n` must be a live network handle; `dist` must be null or NUL-terminated;
 `out_json` must be writable.
 */
enum RaStatus ra_estimate_json(const struct RaNetwork *n,
                               const char *dist,
                               uint64_t samples,
                               uint64_t seed,
                               char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGION_ATLAS_H */
