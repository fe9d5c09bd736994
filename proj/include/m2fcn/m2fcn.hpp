#pragma once

#include "m2fcn/augment.hpp"
#include "m2fcn/autograd.hpp"
#include "m2fcn/checkpoint.hpp"
#include "m2fcn/gradcheck.hpp"
#include "m2fcn/label_image.hpp"
#include "m2fcn/network.hpp"
#include "m2fcn/ops.hpp"
#include "m2fcn/rand_score.hpp"
#include "m2fcn/raster_io.hpp"
#include "m2fcn/segmentation.hpp"
#include "m2fcn/synth.hpp"
#include "m2fcn/trainer.hpp"
