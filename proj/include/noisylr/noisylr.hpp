#pragma once

#include "noisylr/experiments.hpp"
#include "noisylr/io.hpp"
#include "noisylr/labels.hpp"
#include "noisylr/linalg.hpp"
#include "noisylr/math.hpp"
#include "noisylr/model.hpp"
#include "noisylr/parallel.hpp"
#include "noisylr/rng.hpp"
#include "noisylr/solver.hpp"
#include "noisylr/tuning.hpp"
