#pragma once

#include "rwre/rng.hpp"
#include "rwre/numeric.hpp"
#include "rwre/env_model.hpp"
#include "rwre/kernel_dp.hpp"
#include "rwre/limit_theory.hpp"
#include "rwre/particle_sim.hpp"
#include "rwre/stat_harness.hpp"
#include "rwre/io.hpp"
#include "rwre/experiment.hpp"
#include "rwre/acceptance.hpp"
