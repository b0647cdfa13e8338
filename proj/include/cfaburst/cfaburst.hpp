#pragma once

#include "core.hpp"
#include "bayer.hpp"
#include "netpbm.hpp"
#include "color.hpp"
#include "noise.hpp"
#include "flow.hpp"
#include "denoise.hpp"
#include "demosaic.hpp"
#include "pipeline.hpp"
