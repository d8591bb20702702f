#pragma once

#include "segplex/csv.hpp"
#include "segplex/dataset.hpp"
#include "segplex/error.hpp"
#include "segplex/eval.hpp"
#include "segplex/features.hpp"
#include "segplex/mask_io.hpp"
#include "segplex/regress.hpp"
