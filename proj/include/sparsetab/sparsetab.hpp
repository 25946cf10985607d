#pragma once

#include "sparsetab/csv.hpp"
#include "sparsetab/data.hpp"
#include "sparsetab/error.hpp"
#include "sparsetab/hash.hpp"
#include "sparsetab/interpret.hpp"
#include "sparsetab/losses.hpp"
#include "sparsetab/maskgen.hpp"
#include "sparsetab/matrix.hpp"
#include "sparsetab/metrics.hpp"
#include "sparsetab/model_io.hpp"
#include "sparsetab/network.hpp"
#include "sparsetab/optim.hpp"
#include "sparsetab/parallel.hpp"
#include "sparsetab/rng.hpp"
#include "sparsetab/train.hpp"
#include "sparsetab/transfer.hpp"
#include "sparsetab/version.hpp"
