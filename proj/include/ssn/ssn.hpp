#pragma once

// Umbrella header for the stochastic second-order optimization library.

#include "ssn/cg.hpp"
#include "ssn/dataset.hpp"
#include "ssn/diagnostics.hpp"
#include "ssn/harness.hpp"
#include "ssn/lbfgs.hpp"
#include "ssn/linesearch.hpp"
#include "ssn/losses.hpp"
#include "ssn/rng.hpp"
#include "ssn/sampling.hpp"
#include "ssn/solvers.hpp"
