#pragma once

// Umbrella header for the whole library.

#include "rejref/errors.hpp"
#include "rejref/coding.hpp"
#include "rejref/losses.hpp"
#include "rejref/models.hpp"
#include "rejref/dataset.hpp"
#include "rejref/generators.hpp"
#include "rejref/optim.hpp"
#include "rejref/predict.hpp"
#include "rejref/tune.hpp"
#include "rejref/theory.hpp"
#include "rejref/persist.hpp"
#include "rejref/simulate.hpp"
