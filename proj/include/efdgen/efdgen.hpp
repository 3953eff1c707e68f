#pragma once

#include "efdgen/error.hpp"
#include "efdgen/mask.hpp"
#include "efdgen/geometry.hpp"
#include "efdgen/efd.hpp"
#include "efdgen/dataset.hpp"
#include "efdgen/diffusion/schedule.hpp"
#include "efdgen/diffusion/loss.hpp"
#include "efdgen/diffusion/denoiser.hpp"
#include "efdgen/diffusion/train.hpp"
#include "efdgen/diffusion/sample.hpp"
#include "efdgen/diffusion/checkpoint.hpp"
#include "efdgen/metrics.hpp"
#include "efdgen/fixtures.hpp"
#include "efdgen/pipeline.hpp"
