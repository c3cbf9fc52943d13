#pragma once

// Everything except the CLI, which pulls in CLI11.
#include "loadcast/bench.hpp"
#include "loadcast/error.hpp"
#include "loadcast/forecast.hpp"
#include "loadcast/forecasters.hpp"
#include "loadcast/gp.hpp"
#include "loadcast/kernel.hpp"
#include "loadcast/metrics.hpp"
#include "loadcast/svr.hpp"
#include "loadcast/timeseries.hpp"
#include "loadcast/tokenization.hpp"
