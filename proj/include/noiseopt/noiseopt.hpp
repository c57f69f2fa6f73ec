#pragma once

#include "noiseopt/attacks.hpp"
#include "noiseopt/checkpoint.hpp"
#include "noiseopt/config.hpp"
#include "noiseopt/corruptions.hpp"
#include "noiseopt/data.hpp"
#include "noiseopt/evaluate.hpp"
#include "noiseopt/gradcheck.hpp"
#include "noiseopt/io.hpp"
#include "noiseopt/network.hpp"
#include "noiseopt/optim.hpp"
#include "noiseopt/presets.hpp"
#include "noiseopt/report.hpp"
#include "noiseopt/rng.hpp"
#include "noiseopt/saliency.hpp"
#include "noiseopt/tensor.hpp"
#include "noiseopt/train.hpp"
