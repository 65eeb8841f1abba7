// Umbrella header.
#pragma once

#include "deepel/autodiff.hpp"
#include "deepel/candidates.hpp"
#include "deepel/core.hpp"
#include "deepel/corpus.hpp"
#include "deepel/document.hpp"
#include "deepel/embed.hpp"
#include "deepel/experiment.hpp"
#include "deepel/global.hpp"
#include "deepel/gradcheck.hpp"
#include "deepel/local.hpp"
#include "deepel/metrics.hpp"
#include "deepel/model_io.hpp"
#include "deepel/optim.hpp"
#include "deepel/random_instances.hpp"
#include "deepel/sampling.hpp"
#include "deepel/synthetic.hpp"
#include "deepel/training.hpp"
