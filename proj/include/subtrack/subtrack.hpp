#pragma once

// Umbrella header.

#include "subtrack/dataset.hpp"
#include "subtrack/error.hpp"
#include "subtrack/eval.hpp"
#include "subtrack/health.hpp"
#include "subtrack/multiscale.hpp"
#include "subtrack/pipeline.hpp"
#include "subtrack/rul.hpp"
#include "subtrack/serialize.hpp"
#include "subtrack/subspace.hpp"
