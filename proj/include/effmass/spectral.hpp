#ifndef EFFMASS_SPECTRAL_HPP
#define EFFMASS_SPECTRAL_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "effmass/errors.hpp"
#include "effmass/fft.hpp"

namespace effmass {

/// Strongest nonzero frequency of a uniformly sampled trace.
struct SpectralPeak
{
  std::size_t bin = 0;
  double angular_frequency = 0.0;  // radians per unit of t
  double bin_width = 0.0;          // angular spacing of the DFT bins
  double magnitude = 0.0;
};

/// Mean-removed DFT of y(t) over the samples [0, count); t must be uniform.
inline SpectralPeak dominant_frequency(const std::vector<double>& t, const std::vector<double>& y,
                                       std::size_t count = 0)
{
  if (t.size() != y.size())
    throw ConfigError("dominant_frequency: sample count mismatch");
  if (count == 0 || count > y.size())
    count = y.size();
  if (count < 4)
    throw ConfigError("dominant_frequency: need at least four samples");

  const double step = (t[count - 1] - t[0]) / static_cast<double>(count - 1);
  if (!(step > 0))
    throw ConfigError("dominant_frequency: times must increase");

  double mean = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    mean += y[i];
  mean /= static_cast<double>(count);

  std::vector<std::complex<double>> buf(count);
  for (std::size_t i = 0; i < count; ++i)
    buf[i] = y[i] - mean;
  FftPlan plan(count);
  plan.forward(buf);

  SpectralPeak peak;
  peak.bin_width = 2.0 * std::numbers::pi / (step * static_cast<double>(count));
  for (std::size_t l = 1; l <= count / 2; ++l) {
    const double m = std::abs(buf[l]);
    if (m > peak.magnitude) {
      peak.magnitude = m;
      peak.bin = l;
    }
  }
  peak.angular_frequency = peak.bin_width * static_cast<double>(peak.bin);
  return peak;
}

} // namespace effmass

#endif
