/* Builds a network through the C API and prints its bounds and exact count. */
#include <stdio.h>
#include "region_atlas.h"

int main(void) {
    RaGraph *g = NULL;
    RaNetwork *n = NULL;
    char *json = NULL;
    char *count = NULL;
    size_t widths[] = {2, 2, 3};

    if (ra_graph_fixture("path3", &g) != RA_STATUS_OK) {
        fprintf(stderr, "%s\n", ra_last_error());
        return 1;
    }
    if (ra_bounds_json(g, widths, 3, &json) != RA_STATUS_OK) {
        fprintf(stderr, "%s\n", ra_last_error());
        return 1;
    }
    printf("%s\n", json);
    ra_string_free(json);

    size_t one[] = {1, 2};
    if (ra_network_kaiming(g, one, 2, 7, &n) != RA_STATUS_OK || ra_exact_count(n, 1e4, &count) != RA_STATUS_OK) {
        fprintf(stderr, "%s\n", ra_last_error());
        return 1;
    }
    printf("count %s\n", count);
    ra_string_free(count);

    if (ra_graph_fixture(NULL, &g) != RA_STATUS_NULL_POINTER) {
        return 1;
    }
    RaGraph *bad = NULL;
    RaStatus s = ra_graph_fixture("nope", &bad);
    printf("status %d: %s\n", (int)s, ra_last_error());

    ra_network_free(n);
    ra_graph_free(g);
    return s == RA_STATUS_INVALID_ARGUMENT ? 0 : 1;
}
