#pragma once

#include "vxr/rng.hpp"
#include "vxr/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vxr {

struct FdProbe {
    std::size_t index = 0;
    double numeric = 0.0;
    double analytic = 0.0;
    double rel_err = 0.0;
};

// Central finite differences of `loss` against `analytic` on up to
// `max_probes` randomly chosen coordinates of x. loss() must recompute the
// forward pass from the current contents of x; x is restored afterwards.
std::vector<FdProbe> fd_check(Tensor& x, const Tensor& analytic, const std::function<double()>& loss,
                              std::size_t max_probes, Rng& rng, double step = 1e-5);

double max_rel_err(const std::vector<FdProbe>& probes);

struct GradCheckCase {
    std::string name;
    std::size_t instances = 0;
    std::size_t probes = 0;
    double max_rel_err = 0.0;
};

// Seeded gradient checks: every layer kind, both voxel decoders, the toy
// denoiser, and the loss gradients, each on >= `instances_per_case` fresh
// random instances. All cases are expected under 1e-4.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, std::size_t instances_per_case = 20);

}  // namespace vxr
