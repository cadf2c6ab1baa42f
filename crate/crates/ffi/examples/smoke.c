/* Builds a tiny scene through the C API and prints the surface size. */
#include <stdio.h>
#include "carvemesh.h"

int main(void) {
    CmReconstructor *r = NULL;
    if (cm_reconstructor_new(NULL, &r) != CM_STATUS_OK) {
        fprintf(stderr, "new: %s\n", cm_last_error());
        return 1;
    }
    uint64_t id = 0;
    for (uint64_t k = 0; k < 6; k++) {
        double cam[3] = {0.5 * (double)k, 0.0, 1.5};
        if (cm_keyframe_begin(r, k, (uint32_t)k, cam) != CM_STATUS_OK) {
            fprintf(stderr, "begin: %s\n", cm_last_error());
            return 1;
        }
        for (int i = 0; i < 40; i++, id++) {
            double p[3] = {0.5 * (double)k + 0.13 * (double)(i % 7), 4.0 + 0.01 * (double)(i % 5), 0.3 + 0.07 * (double)i};
            cm_keyframe_add_point(r, id, p);
            cm_keyframe_observe(r, (uint32_t)k, id);
        }
        CmKeyframeSummary s;
        if (cm_keyframe_end(r, &s) != CM_STATUS_OK) {
            fprintf(stderr, "end: %s\n", cm_last_error());
            return 1;
        }
    }
    double bad[3] = {0, 0, 0};
    if (cm_keyframe_begin(r, 2, 0, bad) != CM_STATUS_OK || cm_keyframe_end(r, NULL) != CM_STATUS_OUT_OF_ORDER) {
        fprintf(stderr, "expected out-of-order\n");
        return 1;
    }
    CmMesh *m = NULL;
    cm_reconstructor_surface(r, &m);
    printf("%zu %zu\n", cm_mesh_vertex_count(m), cm_mesh_triangle_count(m));
    cm_mesh_free(m);
    cm_reconstructor_free(r);
    return 0;
}
