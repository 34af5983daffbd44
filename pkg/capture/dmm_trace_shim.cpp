// Allocation-trace capture shim: interposes malloc/free (plus calloc and
// realloc as equivalent malloc / free+malloc records) via the dynamic
// linker and appends lines in the simulator's trace format:
//
//     malloc <seconds> <size> 0x<addr>
//     free <seconds> 0x<addr>
//
// Environment:
//     DMM_TRACE_OUT              output path (default MallocTrace.out)
//     DMM_TRACE_START            "off" starts with recording disabled
//     DMM_TRACE_DISABLE_REALLOC  do not record calloc/realloc activity
//
// Recording must never crash or deadlock the host: output is written with
// raw write(2) under one mutex (lines never tear), a thread-local guard
// stops re-entrant recording, and allocations made while the real symbols
// are still being resolved are served from a static bootstrap arena that
// is never recorded.

#include <dlfcn.h>
#include <fcntl.h>
#include <pthread.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>
#include <unistd.h>

#include <atomic>

namespace {

using malloc_fn = void *(*)(size_t);
using free_fn = void (*)(void *);
using calloc_fn = void *(*)(size_t, size_t);
using realloc_fn = void *(*)(void *, size_t);

malloc_fn real_malloc = nullptr;
free_fn real_free = nullptr;
calloc_fn real_calloc = nullptr;
realloc_fn real_realloc = nullptr;

std::atomic<int> g_enabled{1};
int g_record_realloc = 1;
int g_fd = -1;
pthread_mutex_t g_lock = PTHREAD_MUTEX_INITIALIZER;
struct timespec g_origin;
__thread int t_in_hook = 0;

// Bootstrap arena: dlsym itself allocates while we resolve the real
// functions. Those blocks are handed out here and never recorded; frees
// of arena pointers are ignored.
char g_boot[1 << 16];
std::atomic<size_t> g_boot_off{0};
std::atomic<int> g_resolving{0};

bool from_boot(const void *p) {
    return p >= g_boot && p < g_boot + sizeof(g_boot);
}

void *boot_alloc(size_t size) {
    size = (size + 15) & ~size_t(15);
    size_t off = g_boot_off.fetch_add(size);
    if (off + size > sizeof(g_boot)) {
        return nullptr;
    }
    return g_boot + off;
}

void resolve() {
    if (real_malloc) {
        return;
    }
    g_resolving.store(1);
    real_malloc = reinterpret_cast<malloc_fn>(dlsym(RTLD_NEXT, "malloc"));
    real_free = reinterpret_cast<free_fn>(dlsym(RTLD_NEXT, "free"));
    real_calloc = reinterpret_cast<calloc_fn>(dlsym(RTLD_NEXT, "calloc"));
    real_realloc = reinterpret_cast<realloc_fn>(dlsym(RTLD_NEXT, "realloc"));
    g_resolving.store(0);
}

double now_seconds() {
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return double(ts.tv_sec - g_origin.tv_sec) +
           double(ts.tv_nsec - g_origin.tv_nsec) * 1e-9;
}

void open_output() {
    const char *path = getenv("DMM_TRACE_OUT");
    if (path == nullptr || path[0] == '\0') {
        path = "MallocTrace.out";
    }
    g_fd = open(path, O_WRONLY | O_CREAT | O_TRUNC | O_APPEND, 0644);
}

void emit(const char *line, size_t len) {
    if (g_fd < 0) {
        return;
    }
    pthread_mutex_lock(&g_lock);
    ssize_t ignored = write(g_fd, line, len);
    (void)ignored;
    pthread_mutex_unlock(&g_lock);
}

void record_alloc(size_t size, void *ptr) {
    if (ptr == nullptr || !g_enabled.load(std::memory_order_relaxed)) {
        return;
    }
    char buf[96];
    int n = snprintf(buf, sizeof(buf), "malloc %.6f %zu 0x%zx\n",
                     now_seconds(), size, reinterpret_cast<size_t>(ptr));
    if (n > 0) {
        emit(buf, size_t(n));
    }
}

void record_free(void *ptr) {
    if (ptr == nullptr || !g_enabled.load(std::memory_order_relaxed)) {
        return;
    }
    char buf[64];
    int n = snprintf(buf, sizeof(buf), "free %.6f 0x%zx\n",
                     now_seconds(), reinterpret_cast<size_t>(ptr));
    if (n > 0) {
        emit(buf, size_t(n));
    }
}

__attribute__((constructor)) void shim_init() {
    clock_gettime(CLOCK_MONOTONIC, &g_origin);
    const char *start = getenv("DMM_TRACE_START");
    if (start != nullptr && (strcmp(start, "off") == 0 || strcmp(start, "0") == 0)) {
        g_enabled.store(0);
    }
    const char *norealloc = getenv("DMM_TRACE_DISABLE_REALLOC");
    if (norealloc != nullptr && norealloc[0] != '\0' && strcmp(norealloc, "0") != 0) {
        g_record_realloc = 0;
    }
    resolve();
    open_output();
}

__attribute__((destructor)) void shim_fini() {
    if (g_fd >= 0) {
        close(g_fd);
        g_fd = -1;
    }
}

}  // namespace

extern "C" {

// Host programs may toggle recording around a region of interest; declare
// this weak on the host side so binaries also run without the shim.
void dmm_trace_set_enabled(int enabled) {
    g_enabled.store(enabled ? 1 : 0);
}

void *malloc(size_t size) {
    if (real_malloc == nullptr) {
        if (g_resolving.load()) {
            return boot_alloc(size);
        }
        resolve();
    }
    void *ptr = real_malloc(size);
    if (!t_in_hook) {
        t_in_hook = 1;
        record_alloc(size, ptr);
        t_in_hook = 0;
    }
    return ptr;
}

void free(void *ptr) {
    if (ptr == nullptr || from_boot(ptr)) {
        return;  // free(NULL) is an allocator no-op; arena blocks leak
    }
    if (real_free == nullptr) {
        resolve();
    }
    if (!t_in_hook) {
        t_in_hook = 1;
        record_free(ptr);
        t_in_hook = 0;
    }
    real_free(ptr);
}

void *calloc(size_t nmemb, size_t size) {
    if (real_calloc == nullptr) {
        if (g_resolving.load()) {
            void *p = boot_alloc(nmemb * size);
            if (p != nullptr) {
                memset(p, 0, nmemb * size);
            }
            return p;
        }
        resolve();
    }
    void *ptr = real_calloc(nmemb, size);
    if (!t_in_hook && g_record_realloc) {
        t_in_hook = 1;
        record_alloc(nmemb * size, ptr);
        t_in_hook = 0;
    }
    return ptr;
}

void *realloc(void *ptr, size_t size) {
    if (real_realloc == nullptr) {
        resolve();
    }
    if (from_boot(ptr)) {
        void *fresh = real_malloc(size);
        if (fresh != nullptr) {
            memcpy(fresh, ptr, size);
        }
        return fresh;
    }
    void *out = real_realloc(ptr, size);
    if (!t_in_hook && g_record_realloc) {
        t_in_hook = 1;
        // free-then-malloc order so an in-place realloc (same address)
        // parses as a live block again rather than a dangling free
        if (ptr != nullptr && (out != nullptr || size == 0)) {
            record_free(ptr);
        }
        if (out != nullptr && size > 0) {
            record_alloc(size, out);
        }
        t_in_hook = 0;
    }
    return out;
}

}  // extern "C"
