#pragma once

#include "confact/calibration.hpp"
#include "confact/data_io.hpp"
#include "confact/errors.hpp"
#include "confact/extended_real.hpp"
#include "confact/harness.hpp"
#include "confact/loss_model.hpp"
#include "confact/parallel.hpp"
#include "confact/records.hpp"
#include "confact/report.hpp"
#include "confact/simulator.hpp"
