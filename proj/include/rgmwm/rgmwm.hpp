#ifndef RGMWM_RGMWM_HPP
#define RGMWM_RGMWM_HPP

// Umbrella header for the RGMWM library: robust wavelet-variance estimation
// and minimum-distance parameter estimation for time series and lattice
// random fields.

#include "rgmwm/bench.hpp"
#include "rgmwm/errors.hpp"
#include "rgmwm/gmwm.hpp"
#include "rgmwm/io.hpp"
#include "rgmwm/math.hpp"
#include "rgmwm/models.hpp"
#include "rgmwm/parallel.hpp"
#include "rgmwm/rng.hpp"
#include "rgmwm/wavelet.hpp"
#include "rgmwm/wv.hpp"

#endif
