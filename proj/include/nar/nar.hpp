#pragma once

// Umbrella header.

#include "nar/config.hpp"
#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/harness.hpp"
#include "nar/io.hpp"
#include "nar/label_handler.hpp"
#include "nar/losses.hpp"
#include "nar/metrics.hpp"
#include "nar/model.hpp"
#include "nar/noise.hpp"
#include "nar/numerics.hpp"
#include "nar/optim.hpp"
#include "nar/trainer.hpp"
