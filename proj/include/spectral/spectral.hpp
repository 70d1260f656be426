#pragma once

// Umbrella header.

#include "spectral/checkpoint.hpp"
#include "spectral/cli.hpp"
#include "spectral/data.hpp"
#include "spectral/errors.hpp"
#include "spectral/experiment.hpp"
#include "spectral/layer.hpp"
#include "spectral/layers.hpp"
#include "spectral/linalg.hpp"
#include "spectral/matrix.hpp"
#include "spectral/model.hpp"
#include "spectral/rng.hpp"
#include "spectral/tensor.hpp"
#include "spectral/training.hpp"
#include "spectral/transforms.hpp"
