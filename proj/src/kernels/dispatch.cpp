#include "geopatch/kernels.hpp"

#include <cstdlib>
#include <string>

namespace geopatch::kernels {

#if !defined(GEOPATCH_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !defined(GEOPATCH_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif

std::string_view to_string(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
    }
    return "unknown";
}

namespace {

const KernelTable& select() {
    const char* forced = std::getenv("GEOPATCH_KERNELS");
    const std::string want = forced ? forced : "";
    if (want == "scalar") return scalar_table();
    if (want == "avx2" && avx2_table()) return *avx2_table();
    if (want == "neon" && neon_table()) return *neon_table();
    if (const auto* t = avx2_table()) return *t;
    if (const auto* t = neon_table()) return *t;
    return scalar_table();
}

} // namespace

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

} // namespace geopatch::kernels
