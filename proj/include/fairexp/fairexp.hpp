#pragma once

#include "fairexp/allocation.hpp"
#include "fairexp/config.hpp"
#include "fairexp/designs.hpp"
#include "fairexp/dgp.hpp"
#include "fairexp/engine.hpp"
#include "fairexp/inference.hpp"
#include "fairexp/montecarlo.hpp"
#include "fairexp/normal.hpp"
#include "fairexp/rng.hpp"
#include "fairexp/stats.hpp"
#include "fairexp/version.hpp"
#include "fairexp/welfare.hpp"
