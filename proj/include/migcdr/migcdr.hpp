#pragma once
// Umbrella header.

#include "migcdr/cdr_core.hpp"
#include "migcdr/cluster_engine.hpp"
#include "migcdr/home_inference.hpp"
#include "migcdr/pair_series.hpp"
#include "migcdr/pipeline/stages.hpp"
#include "migcdr/predictor/evaluation.hpp"
#include "migcdr/predictor/features.hpp"
#include "migcdr/predictor/model_selection.hpp"
#include "migcdr/synth_gen.hpp"
#include "migcdr/tie_graph.hpp"
