#pragma once

// Umbrella header for the maskrefine toolkit.

#include "maskrefine/bayes.hpp"
#include "maskrefine/compare.hpp"
#include "maskrefine/errors.hpp"
#include "maskrefine/gradcheck.hpp"
#include "maskrefine/image.hpp"
#include "maskrefine/imageio.hpp"
#include "maskrefine/metrics.hpp"
#include "maskrefine/ops.hpp"
#include "maskrefine/refiner.hpp"
#include "maskrefine/rng.hpp"
#include "maskrefine/synth.hpp"
#include "maskrefine/tensor.hpp"
#include "maskrefine/train.hpp"
