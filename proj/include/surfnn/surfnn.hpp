#pragma once

#include "surfnn/common.hpp"
#include "surfnn/config_file.hpp"
#include "surfnn/deform.hpp"
#include "surfnn/io.hpp"
#include "surfnn/levelset.hpp"
#include "surfnn/losses.hpp"
#include "surfnn/mesh.hpp"
#include "surfnn/metrics.hpp"
#include "surfnn/optimize.hpp"
#include "surfnn/parallel.hpp"
#include "surfnn/phantom.hpp"
#include "surfnn/spatial_grid.hpp"
#include "surfnn/volume.hpp"
