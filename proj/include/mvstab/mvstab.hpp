#pragma once

// Umbrella header.

#include "mvstab/errors.hpp"
#include "mvstab/numerics.hpp"
#include "mvstab/rng.hpp"
#include "mvstab/parallel.hpp"
#include "mvstab/timeseries.hpp"
#include "mvstab/model.hpp"
#include "mvstab/stationary.hpp"
#include "mvstab/spectrum.hpp"
#include "mvstab/perturb.hpp"
#include "mvstab/particles.hpp"
#include "mvstab/fokkerplanck.hpp"
#include "mvstab/metrics.hpp"
#include "mvstab/config.hpp"
#include "mvstab/schema.hpp"
#include "mvstab/svg.hpp"
#include "mvstab/cli.hpp"
