#ifndef EFFMASS_CONSTANTS_HPP
#define EFFMASS_CONSTANTS_HPP

#include <numbers>

/** @file effmass/constants.hpp
    @brief Physical constants (CODATA 2018 recommended values) and atomic masses.

    The atomic masses are the rounded values used for the optical-lattice
    presets: Rb-87 86.909 u and Na-23 22.990 u (AME 2016 / NIST atomic weights).
 */

namespace effmass::constants {

inline constexpr double pi = std::numbers::pi;

inline constexpr double planck = 6.62607015e-34;              // J s (exact)
inline constexpr double hbar = planck / (2.0 * pi);            // J s
inline constexpr double elementary_charge = 1.602176634e-19;   // C (exact)
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double electron_mass = 9.1093837015e-31;      // kg

inline constexpr double rb87_mass_amu = 86.909;
inline constexpr double na23_mass_amu = 22.990;

} // namespace effmass::constants

#endif
