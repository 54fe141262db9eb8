#pragma once

// Umbrella header.

#include "spikesv/config.hpp"
#include "spikesv/criterion.hpp"
#include "spikesv/ensembles.hpp"
#include "spikesv/errors.hpp"
#include "spikesv/genetics.hpp"
#include "spikesv/harness.hpp"
#include "spikesv/io.hpp"
#include "spikesv/model.hpp"
#include "spikesv/predictor.hpp"
#include "spikesv/rng.hpp"
#include "spikesv/svd.hpp"
