#pragma once

#include "baselines.hpp"
#include "calibration.hpp"
#include "data_model.hpp"
#include "error.hpp"
#include "fingerprint.hpp"
#include "global_test.hpp"
#include "lasso_solver.hpp"
#include "power_study.hpp"
#include "rng.hpp"
#include "version.hpp"
