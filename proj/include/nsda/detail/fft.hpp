#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace nsda::detail {

// Process-wide cache of 2D complex FFTW plans keyed by (n, sign). Planning is
// serialized; execution through the new-array interface is reentrant, so
// callers bring their own buffers.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }

  fftw_plan get(int n, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_pair(n, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<std::complex<double>> scratch(static_cast<size_t>(n) * n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    // FFTW_ESTIMATE keeps planning deterministic, which the reproducibility
    // guarantee of the harness depends on.
    fftw_plan plan = fftw_plan_dft_2d(n, n, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(key, plan);
    return plan;
  }

  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;

 private:
  FftPlans() = default;
  ~FftPlans() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

/// In-place unnormalized 2D transform; sign = FFTW_FORWARD computes
/// sum_x a(x) e^{-ik.x}, FFTW_BACKWARD the conjugate sum.
inline void fft2d_inplace(std::vector<std::complex<double>>& data, int n, int sign) {
  fftw_plan plan = FftPlans::instance().get(n, sign);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace nsda::detail
