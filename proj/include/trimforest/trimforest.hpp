#pragma once

#include "trimforest/common.hpp"
#include "trimforest/dataset.hpp"
#include "trimforest/forest.hpp"
#include "trimforest/harness.hpp"
#include "trimforest/parallel.hpp"
#include "trimforest/rng.hpp"
#include "trimforest/theory.hpp"
#include "trimforest/tree.hpp"
#include "trimforest/trim.hpp"
