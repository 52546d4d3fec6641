#pragma once

#include "ntkd/activation.hpp"
#include "ntkd/data.hpp"
#include "ntkd/errors.hpp"
#include "ntkd/experiments.hpp"
#include "ntkd/io.hpp"
#include "ntkd/kernels.hpp"
#include "ntkd/linalg.hpp"
#include "ntkd/network.hpp"
#include "ntkd/oracle.hpp"
#include "ntkd/regression.hpp"
#include "ntkd/spectrum.hpp"
#include "ntkd/stats.hpp"
#include "ntkd/training.hpp"
