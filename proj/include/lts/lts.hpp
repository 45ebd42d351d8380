#pragma once

#include "lts/common.hpp"
#include "lts/dataset.hpp"
#include "lts/tree.hpp"
#include "lts/gboost.hpp"
#include "lts/sampler.hpp"
#include "lts/metrics.hpp"
#include "lts/strategies.hpp"
#include "lts/report.hpp"
#include "lts/config.hpp"
