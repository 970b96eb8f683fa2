#ifndef EFFMASS_FFT_HPP
#define EFFMASS_FFT_HPP

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>

#include <fftw3.h>

#include "effmass/errors.hpp"

namespace effmass {

namespace detail {
// FFTW's planner is not thread safe; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex()
{
  static std::mutex m;
  return m;
}
} // namespace detail

/// In-place 1D complex transform of fixed size. Unnormalized in both
/// directions, matching FFTW: backward(forward(x)) == n * x.
class FftPlan
{
public:
  explicit FftPlan(std::size_t n) : n_(n)
  {
    if (n == 0)
      throw ConfigError("FftPlan: size must be positive");
    auto* buffer = fftw_alloc_complex(n);
    if (!buffer)
      throw NumericalError("FftPlan: allocation failed");
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
      const int size = static_cast<int>(n);
      forward_ = fftw_plan_dft_1d(size, buffer, buffer, FFTW_FORWARD, flags);
      backward_ = fftw_plan_dft_1d(size, buffer, buffer, FFTW_BACKWARD, flags);
    }
    fftw_free(buffer);
    if (!forward_ || !backward_) {
      release();
      throw NumericalError("FftPlan: FFTW could not create a plan");
    }
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  FftPlan(FftPlan&& other) noexcept
    : n_(other.n_), forward_(other.forward_), backward_(other.backward_)
  {
    other.forward_ = other.backward_ = nullptr;
  }
  FftPlan& operator=(FftPlan&& other) noexcept
  {
    if (this != &other) {
      release();
      n_ = other.n_;
      forward_ = other.forward_;
      backward_ = other.backward_;
      other.forward_ = other.backward_ = nullptr;
    }
    return *this;
  }
  ~FftPlan() { release(); }

  std::size_t size() const noexcept { return n_; }

  /// x_l <- sum_i x_i exp(-2 pi i l i / n)
  void forward(std::span<std::complex<double>> data) const { execute(forward_, data); }
  /// x_i <- sum_l x_l exp(+2 pi i l i / n)
  void backward(std::span<std::complex<double>> data) const { execute(backward_, data); }

private:
  void execute(fftw_plan plan, std::span<std::complex<double>> data) const
  {
    if (data.size() != n_)
      throw ConfigError("FftPlan: buffer size mismatch");
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
  }

  void release() noexcept
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
    forward_ = backward_ = nullptr;
  }

  std::size_t n_ = 0;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

} // namespace effmass

#endif
