#pragma once

#include "flunow/changepoint.hpp"
#include "flunow/error.hpp"
#include "flunow/evaluation.hpp"
#include "flunow/features.hpp"
#include "flunow/models/model.hpp"
#include "flunow/query_selection.hpp"
#include "flunow/rng.hpp"
#include "flunow/series.hpp"
#include "flunow/synth.hpp"
