#pragma once

#include "spiketag/cli.hpp"
#include "spiketag/config.hpp"
#include "spiketag/data.hpp"
#include "spiketag/energy.hpp"
#include "spiketag/error.hpp"
#include "spiketag/gradcheck.hpp"
#include "spiketag/layers.hpp"
#include "spiketag/metrics.hpp"
#include "spiketag/neuron.hpp"
#include "spiketag/persistence.hpp"
#include "spiketag/rng.hpp"
#include "spiketag/tensor.hpp"
#include "spiketag/toy_corpus.hpp"
#include "spiketag/training.hpp"
