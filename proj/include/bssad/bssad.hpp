#pragma once

#include "bssad/anomaly.hpp"
#include "bssad/config.hpp"
#include "bssad/dataset.hpp"
#include "bssad/filters.hpp"
#include "bssad/gradient.hpp"
#include "bssad/model_io.hpp"
#include "bssad/neural.hpp"
#include "bssad/pipeline.hpp"
#include "bssad/rng.hpp"
#include "bssad/synth.hpp"
#include "bssad/training.hpp"
