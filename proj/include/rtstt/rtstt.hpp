#pragma once

#include "rtstt/audio.hpp"
#include "rtstt/bench.hpp"
#include "rtstt/config.hpp"
#include "rtstt/engine.hpp"
#include "rtstt/half.hpp"
#include "rtstt/kernels.hpp"
#include "rtstt/metrics.hpp"
#include "rtstt/model.hpp"
#include "rtstt/pipeline.hpp"
#include "rtstt/stft.hpp"
#include "rtstt/tensor.hpp"
#include "rtstt/verify.hpp"
#include "rtstt/weights.hpp"
