#pragma once

#include "audsim/channel.hpp"
#include "audsim/config.hpp"
#include "audsim/diagnostics.hpp"
#include "audsim/fusion.hpp"
#include "audsim/harness.hpp"
#include "audsim/metrics.hpp"
#include "audsim/omp.hpp"
#include "audsim/pilots.hpp"
#include "audsim/rng.hpp"
#include "audsim/version.hpp"
