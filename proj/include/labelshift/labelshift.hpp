#pragma once

// Label-shift correction toolkit: posterior adjustments, classical prior
// estimators, a controlled shift benchmark generator, small probabilistic
// base classifiers and an experiment harness.

#include "labelshift/adjust.hpp"
#include "labelshift/data.hpp"
#include "labelshift/distribution.hpp"
#include "labelshift/error.hpp"
#include "labelshift/experiment.hpp"
#include "labelshift/metrics.hpp"
#include "labelshift/models.hpp"
#include "labelshift/posterior.hpp"
#include "labelshift/rng.hpp"
#include "labelshift/shiftbench.hpp"
#include "labelshift/synth.hpp"
