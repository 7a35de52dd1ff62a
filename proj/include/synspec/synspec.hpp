#pragma once

#include "synspec/adam.hpp"
#include "synspec/architecture.hpp"
#include "synspec/bench.hpp"
#include "synspec/config_io.hpp"
#include "synspec/dataset.hpp"
#include "synspec/error.hpp"
#include "synspec/layers.hpp"
#include "synspec/model.hpp"
#include "synspec/npy.hpp"
#include "synspec/oracle.hpp"
#include "synspec/parallel.hpp"
#include "synspec/random.hpp"
#include "synspec/spectra.hpp"
#include "synspec/tensor.hpp"
#include "synspec/training.hpp"
