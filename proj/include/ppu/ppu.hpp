#pragma once

#include "ppu/adam.hpp"
#include "ppu/checkpoint.hpp"
#include "ppu/curve.hpp"
#include "ppu/dataset.hpp"
#include "ppu/error.hpp"
#include "ppu/geom.hpp"
#include "ppu/gradcheck.hpp"
#include "ppu/interpolate.hpp"
#include "ppu/loss.hpp"
#include "ppu/metrics.hpp"
#include "ppu/net.hpp"
#include "ppu/ops.hpp"
#include "ppu/point_io.hpp"
#include "ppu/point_set.hpp"
#include "ppu/svg.hpp"
#include "ppu/sweep.hpp"
#include "ppu/tensor.hpp"
#include "ppu/trainer.hpp"
