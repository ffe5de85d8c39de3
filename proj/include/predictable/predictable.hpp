#pragma once

// Everything except the HTTP layer (predictable/service.hpp), which pulls in
// cpp-httplib.

#include "predictable/brute_force.hpp"
#include "predictable/comparison.hpp"
#include "predictable/domains.hpp"
#include "predictable/error.hpp"
#include "predictable/experiment.hpp"
#include "predictable/grid.hpp"
#include "predictable/io.hpp"
#include "predictable/mdp.hpp"
#include "predictable/policy.hpp"
#include "predictable/predictability.hpp"
#include "predictable/render.hpp"
#include "predictable/rng.hpp"
#include "predictable/simulate.hpp"
#include "predictable/solver.hpp"
