#include "untangle/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "untangle/errors.hpp"

namespace untangle::kernels {

extern const Table kScalarTable;
const Table* avx2_table_or_null();

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend pick_default() {
    if (const char* env = std::getenv("UNTANGLE_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!backend_available(Backend::avx2))
                throw schema_error("UNTANGLE_KERNELS=avx2 but this CPU lacks AVX2+FMA");
            return Backend::avx2;
        }
        if (std::strcmp(env, "auto") != 0)
            throw schema_error(std::string("UNTANGLE_KERNELS: unknown value '") + env + "'");
    }
    return cpu_has_avx2_fma() ? Backend::avx2 : Backend::scalar;
}

std::atomic<const Table*> g_active{nullptr};

}  // namespace

bool backend_available(Backend b) {
    switch (b) {
        case Backend::scalar:
            return true;
        case Backend::avx2:
            return cpu_has_avx2_fma() && avx2_table_or_null() != nullptr;
    }
    return false;
}

const Table& table(Backend b) {
    switch (b) {
        case Backend::scalar:
            return kScalarTable;
        case Backend::avx2:
            if (backend_available(Backend::avx2)) return *avx2_table_or_null();
            throw range_error("avx2 kernel backend not available on this CPU");
    }
    throw range_error("unknown kernel backend");
}

const Table& active() {
    const Table* t = g_active.load(std::memory_order_acquire);
    if (!t) {
        t = &table(pick_default());
        g_active.store(t, std::memory_order_release);
    }
    return *t;
}

void set_backend(Backend b) { g_active.store(&table(b), std::memory_order_release); }

std::string active_name() { return active().name; }

}  // namespace untangle::kernels
