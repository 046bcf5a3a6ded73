#pragma once

#include <cstdint>
#include <functional>

namespace iconpeft {

// Intra-op worker cap. Defaults to ICON_PEFT_THREADS (or 1 when unset).
int max_threads();
void set_max_threads(int n);

// Splits [0, n) into contiguous chunks, one per worker. Each worker writes a
// disjoint output slice, so the result is identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

}  // namespace iconpeft
