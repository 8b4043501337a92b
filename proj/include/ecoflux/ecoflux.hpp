#pragma once

// Umbrella header for the whole library.

#include "expr.hpp"
#include "model.hpp"
#include "model_format.hpp"
#include "ode.hpp"
#include "partition.hpp"
#include "diact.hpp"
#include "transient.hpp"
#include "analysis.hpp"
#include "indicators.hpp"
#include "interactions.hpp"
#include "io.hpp"
#include "discrete.hpp"
