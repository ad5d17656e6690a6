#pragma once

#include "ieat/analysis.hpp"
#include "ieat/combinatorics.hpp"
#include "ieat/core.hpp"
#include "ieat/error.hpp"
#include "ieat/io.hpp"
#include "ieat/permutation.hpp"
#include "ieat/rng.hpp"
#include "ieat/synth.hpp"
