#include "insertnet/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace insertnet::kern {
namespace {

const Ops* pick() {
    const char* force = std::getenv("INSERTNET_KERNELS");
    if (force) {
        if (std::strcmp(force, "scalar") == 0) return &scalar_ops();
#if defined(__x86_64__) || defined(__i386__)
        if (std::strcmp(force, "avx2") == 0) return &avx2_ops();
#endif
    }
#if defined(__x86_64__) || defined(__i386__)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &avx2_ops();
#endif
    return &scalar_ops();
}

} // namespace

const Ops& ops() {
    static const Ops* active = pick();
    return *active;
}

const char* active_kernel_name() { return ops().name; }

} // namespace insertnet::kern
