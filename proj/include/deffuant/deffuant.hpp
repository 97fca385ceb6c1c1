#pragma once

#include "deffuant/config.hpp"
#include "deffuant/distribution.hpp"
#include "deffuant/energy.hpp"
#include "deffuant/engine.hpp"
#include "deffuant/experiments.hpp"
#include "deffuant/init.hpp"
#include "deffuant/lattice.hpp"
#include "deffuant/report.hpp"
#include "deffuant/rng.hpp"
#include "deffuant/sad.hpp"
#include "deffuant/stats.hpp"
