#include <stdio.h>
#include <string.h>

#include "deq.h"

int main(void) {
    uint32_t table[4] = {2, 3, 2, 1};
    DeqFiniteMap *map = NULL;
    if (deq_finite_map_new(table, 4, &map) != DEQ_STATUS_OK) return 1;
    uint32_t f_star[4];
    uint64_t n = 0, k = 0;
    uint32_t tail = 0;
    if (deq_finite_deep_equilibrium(map, f_star, &n, &tail, &k) != DEQ_STATUS_OK) return 2;
    deq_finite_map_free(map);
    if (n != 2 || tail != 2 || k != 2) return 3;
    if (f_star[0] != 3 || f_star[1] != 2 || f_star[2] != 3 || f_star[3] != 2) return 4;

    uint32_t bad[3] = {2, 3, 5};
    if (deq_finite_map_new(bad, 3, &map) != DEQ_STATUS_INVALID_ARGUMENT) return 5;
    if (deq_last_error_message() == NULL) return 6;

    char *report = NULL;
    if (deq_run_problem_json("{\"task\":\"finite-deq\",\"params\":{\"map\":[1]}}", &report) != DEQ_STATUS_OK) return 7;
    if (strstr(report, "\"idempotent\":true") == NULL) return 8;
    deq_string_free(report);
    printf("ok %s\n", deq_version());
    return 0;
}
