#pragma once

#include "hypdrift/drift.hpp"
#include "hypdrift/errors.hpp"
#include "hypdrift/experiments.hpp"
#include "hypdrift/hyperbolic.hpp"
#include "hypdrift/lyapunov.hpp"
#include "hypdrift/parallel.hpp"
#include "hypdrift/percolation.hpp"
#include "hypdrift/random.hpp"
#include "hypdrift/report.hpp"
#include "hypdrift/stats.hpp"
#include "hypdrift/tiling.hpp"
#include "hypdrift/tree.hpp"
