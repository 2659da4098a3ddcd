#pragma once

#include <cstddef>
#include <vector>

namespace arch {

// Forward/backward model-evaluation counters, the hardware-independent cost
// metric. One unit = one batch-level model evaluation.
struct PassCounter {
    std::size_t forward_count = 0;
    std::size_t backward_count = 0;

    struct IterationCost {
        std::size_t forward = 0;
        std::size_t backward = 0;
    };
    std::vector<IterationCost> per_iteration;

    void record(std::size_t fwd, std::size_t bwd) {
        forward_count += fwd;
        backward_count += bwd;
        if (!per_iteration.empty()) {
            per_iteration.back().forward += fwd;
            per_iteration.back().backward += bwd;
        }
    }

    void begin_iteration() { per_iteration.push_back({}); }

    double forward_avg() const {
        return per_iteration.empty()
                   ? 0.0
                   : static_cast<double>(forward_count) / per_iteration.size();
    }
    double backward_avg() const {
        return per_iteration.empty()
                   ? 0.0
                   : static_cast<double>(backward_count) / per_iteration.size();
    }
};

}  // namespace arch
