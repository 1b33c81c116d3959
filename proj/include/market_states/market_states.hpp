#pragma once

#include "market_states/clustering.hpp"
#include "market_states/correlation.hpp"
#include "market_states/date.hpp"
#include "market_states/dynamics.hpp"
#include "market_states/error.hpp"
#include "market_states/geometry.hpp"
#include "market_states/ingest.hpp"
#include "market_states/io.hpp"
#include "market_states/mds.hpp"
#include "market_states/parallel.hpp"
#include "market_states/random.hpp"
#include "market_states/synth.hpp"
