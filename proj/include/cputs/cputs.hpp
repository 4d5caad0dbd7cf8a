#pragma once

//! Umbrella header: conformal prediction sets for a shifted target
//! population, with likelihood-ratio weights learned by distribution
//! matching and conditional densities from quantile-process fits.

#include "cputs/conditional_density.hpp"
#include "cputs/conformal.hpp"
#include "cputs/csv.hpp"
#include "cputs/quantile_regression.hpp"
#include "cputs/rbf_basis.hpp"
#include "cputs/rng.hpp"
#include "cputs/simulation.hpp"
#include "cputs/spline_basis.hpp"
#include "cputs/stats.hpp"
#include "cputs/weights.hpp"
