#pragma once

#include "nanbu/linalg.hpp"
#include "nanbu/random.hpp"
#include "nanbu/geometry.hpp"
#include "nanbu/kernels.hpp"
#include "nanbu/particle_system.hpp"
#include "nanbu/observables.hpp"
#include "nanbu/inequalities.hpp"
#include "nanbu/experiment.hpp"
