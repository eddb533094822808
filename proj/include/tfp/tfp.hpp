#pragma once

#include "tfp/config.hpp"
#include "tfp/csv.hpp"
#include "tfp/error.hpp"
#include "tfp/featex.hpp"
#include "tfp/gmmbase.hpp"
#include "tfp/gpreg.hpp"
#include "tfp/grid.hpp"
#include "tfp/lds.hpp"
#include "tfp/motionseg.hpp"
#include "tfp/pgm.hpp"
#include "tfp/pipeline.hpp"
#include "tfp/synth.hpp"
