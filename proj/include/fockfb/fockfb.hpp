#pragma once

#include "fockfb/core.hpp"
#include "fockfb/fock.hpp"
#include "fockfb/measurement.hpp"
#include "fockfb/rng.hpp"
#include "fockfb/channels.hpp"
#include "fockfb/filter.hpp"
#include "fockfb/lyapunov.hpp"
#include "fockfb/policy.hpp"
#include "fockfb/stats.hpp"
#include "fockfb/simulator.hpp"
#include "fockfb/analysis.hpp"
#include "fockfb/config.hpp"
#include "fockfb/export.hpp"
#include "fockfb/bridge.hpp"
