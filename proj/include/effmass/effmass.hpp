#ifndef EFFMASS_EFFMASS_HPP
#define EFFMASS_EFFMASS_HPP

#include "effmass/errors.hpp"
#include "effmass/constants.hpp"
#include "effmass/numeric.hpp"
#include "effmass/tridiagonal.hpp"
#include "effmass/bands.hpp"
#include "effmass/scenario.hpp"
#include "effmass/timeseries.hpp"
#include "effmass/firstorder.hpp"
#include "effmass/fft.hpp"
#include "effmass/splitstep.hpp"
#include "effmass/spectral.hpp"
#include "effmass/csv.hpp"
#include "effmass/compare.hpp"
#include "effmass/runner.hpp"

#endif
