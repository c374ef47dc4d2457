#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "rns/grid.hpp"

namespace rns::fft {

/// Real-to-complex / complex-to-real plan pair for an n^3 lattice.
/// Plans are created with FFTW_ESTIMATE | FFTW_UNALIGNED so that execution is
/// deterministic and independent of buffer alignment; new-array execution is
/// thread safe.
class PlanPair {
public:
    explicit PlanPair(int n) : n_(n) {
        const std::size_t real_size = std::size_t(n) * n * n;
        const std::size_t cplx_size = std::size_t(n) * n * (n / 2 + 1);
        std::vector<double> r(real_size);
        std::vector<std::complex<double>> c(cplx_size);
        auto* cp = reinterpret_cast<fftw_complex*>(c.data());
        forward_ = fftw_plan_dft_r2c_3d(n, n, n, r.data(), cp, FFTW_ESTIMATE | FFTW_UNALIGNED);
        backward_ = fftw_plan_dft_c2r_3d(n, n, n, cp, r.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    PlanPair(const PlanPair&) = delete;
    PlanPair& operator=(const PlanPair&) = delete;
    ~PlanPair() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    /// Unnormalized forward transform. Input is preserved.
    void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
        fftw_execute_dft_r2c(forward_, const_cast<double*>(in.data()),
                             reinterpret_cast<fftw_complex*>(out.data()));
    }

    /// Inverse transform divided by n^3. Input is preserved (a scratch copy is made).
    void backward(std::span<const std::complex<double>> in, std::span<double> out) const {
        std::vector<std::complex<double>> scratch(in.begin(), in.end());
        fftw_execute_dft_c2r(backward_, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
        const double scale = 1.0 / (double(n_) * n_ * n_);
        for (double& v : out) v *= scale;
    }

private:
    int n_;
    fftw_plan forward_{};
    fftw_plan backward_{};
};

namespace detail {
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

/// Shared plan pair for lattice size n. The FFTW planner is not thread safe,
/// so creation is serialized; the returned reference lives for the program.
inline const PlanPair& plans(int n) {
    static std::map<int, std::unique_ptr<PlanPair>> cache;
    std::lock_guard lock(detail::planner_mutex());
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_unique<PlanPair>(n)).first;
    return *it->second;
}

}  // namespace rns::fft
