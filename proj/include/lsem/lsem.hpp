#pragma once

#include "lsem/error.hpp"
#include "lsem/rng.hpp"
#include "lsem/linalg.hpp"
#include "lsem/mixed_graph.hpp"
#include "lsem/lsem_core.hpp"
#include "lsem/recovery.hpp"
#include "lsem/robustness.hpp"
#include "lsem/generators.hpp"
#include "lsem/reduction.hpp"
#include "lsem/io.hpp"
#include "lsem/experiments.hpp"
