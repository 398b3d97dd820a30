#pragma once

#include "naf/attention.hpp"
#include "naf/bench.hpp"
#include "naf/checkpoint.hpp"
#include "naf/common.hpp"
#include "naf/encoder.hpp"
#include "naf/filters.hpp"
#include "naf/flops.hpp"
#include "naf/npy.hpp"
#include "naf/png_io.hpp"
#include "naf/restoration.hpp"
#include "naf/rng.hpp"
#include "naf/rope.hpp"
#include "naf/spectral.hpp"
#include "naf/tensor.hpp"
#include "naf/training.hpp"
