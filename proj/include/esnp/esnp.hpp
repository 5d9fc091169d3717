#pragma once

#include "esnp/dynamics.hpp"
#include "esnp/ergodicity.hpp"
#include "esnp/error.hpp"
#include "esnp/field_io.hpp"
#include "esnp/fields.hpp"
#include "esnp/grid.hpp"
#include "esnp/initial_data.hpp"
#include "esnp/modes.hpp"
#include "esnp/observables.hpp"
#include "esnp/parallel.hpp"
#include "esnp/picard.hpp"
#include "esnp/poisson.hpp"
#include "esnp/rng.hpp"
#include "esnp/spectral.hpp"
#include "esnp/stokes.hpp"
#include "esnp/harness/checkpoint.hpp"
#include "esnp/harness/config.hpp"
#include "esnp/harness/plot.hpp"
#include "esnp/harness/run.hpp"
