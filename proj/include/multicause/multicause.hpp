#pragma once

#include "multicause/config_io.hpp"
#include "multicause/dataset.hpp"
#include "multicause/dataset_io.hpp"
#include "multicause/deconfounder.hpp"
#include "multicause/errors.hpp"
#include "multicause/factor_model.hpp"
#include "multicause/harness.hpp"
#include "multicause/iv.hpp"
#include "multicause/linalg.hpp"
#include "multicause/minitoml.hpp"
#include "multicause/parallel.hpp"
#include "multicause/parametric.hpp"
#include "multicause/report.hpp"
#include "multicause/rng.hpp"
#include "multicause/scenarios.hpp"
#include "multicause/stats.hpp"
#include "multicause/stochastic_intervention.hpp"
#include "multicause/treatment_distribution.hpp"
