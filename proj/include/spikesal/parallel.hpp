// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace spikesal {

/// Worker count used by parallel kernels. 1 (the default) is the serial
/// reference mode; results never depend on this value.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Calls fn(i) for i in [0, n). Each index is handled by exactly one worker;
/// callers must write disjoint outputs per index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace spikesal
