/* Scripted workload for shim validation.
 *
 * Default mode performs exactly 1000 allocations and 1000 frees in a
 * mixed order between recording markers, avoiding stdio so the trace
 * contains nothing else. "probe" mode exercises free(NULL), calloc, and
 * realloc for the shim's edge-case tests.
 */
#include <stdlib.h>
#include <string.h>
#include <unistd.h>

/* Present when running under the shim; absent (NULL) otherwise. */
extern void dmm_trace_set_enabled(int) __attribute__((weak));

static unsigned long rng_state = 0x2545F491u;

static unsigned long next_rand(void) {
    rng_state ^= rng_state << 13;
    rng_state ^= rng_state >> 7;
    rng_state ^= rng_state << 17;
    return rng_state;
}

static void say(const char *msg) {
    ssize_t ignored = write(1, msg, strlen(msg));
    (void)ignored;
}

static int scripted(void) {
    enum { N = 1000, WINDOW = 64 };
    void *slots[WINDOW] = {0};
    int allocated = 0, freed = 0;

    if (dmm_trace_set_enabled) {
        dmm_trace_set_enabled(1);
    }
    while (freed < N) {
        int i = (int)(next_rand() % WINDOW);
        if (slots[i] == NULL && allocated < N) {
            size_t size = 1 + (size_t)(next_rand() % 8192);
            slots[i] = malloc(size);
            if (slots[i] == NULL) {
                return 1;
            }
            allocated++;
        } else if (slots[i] != NULL) {
            free(slots[i]);
            slots[i] = NULL;
            freed++;
        }
    }
    if (dmm_trace_set_enabled) {
        dmm_trace_set_enabled(0);
    }
    say("scripted: 1000 allocations, 1000 frees\n");
    return 0;
}

/* Stops the compiler from eliding allocation/free pairs. */
static void observe(void *p) {
    __asm__ volatile("" : : "r"(p) : "memory");
}

static int probe(void) {
    if (dmm_trace_set_enabled) {
        dmm_trace_set_enabled(1);
    }
    free(NULL); /* must not be recorded */
    void *c = calloc(4, 32);
    observe(c);
    void *r = malloc(100);
    observe(r);
    r = realloc(r, 300);
    observe(r);
    free(r);
    free(c);
    if (dmm_trace_set_enabled) {
        dmm_trace_set_enabled(0);
    }
    say("probe done\n");
    return 0;
}

int main(int argc, char **argv) {
    if (argc > 1 && strcmp(argv[1], "probe") == 0) {
        return probe();
    }
    if (argc > 1 && strcmp(argv[1], "empty") == 0) {
        return 0; /* no allocations at all */
    }
    return scripted();
}
