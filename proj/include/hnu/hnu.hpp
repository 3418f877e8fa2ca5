#pragma once

// Everything except the HTTP layer, which pulls in httplib.

#include "hnu/expr.hpp"
#include "hnu/rules.hpp"
#include "hnu/proof.hpp"
#include "hnu/search.hpp"
#include "hnu/problems.hpp"
#include "hnu/trace.hpp"
#include "hnu/network.hpp"
#include "hnu/stepscore.hpp"
#include "hnu/forest.hpp"
#include "hnu/predictor.hpp"
#include "hnu/hint.hpp"
#include "hnu/policy.hpp"
#include "hnu/simulator.hpp"
#include "hnu/metrics.hpp"
#include "hnu/experiments.hpp"
#include "hnu/service.hpp"
