#pragma once

#include "adam.hpp"
#include "decomposition.hpp"
#include "distances.hpp"
#include "geometry.hpp"
#include "graph_init.hpp"
#include "io.hpp"
#include "kdtree.hpp"
#include "link_gae.hpp"
#include "mesh_builder.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "reconstruction.hpp"
#include "sampling.hpp"
#include "skeleton_optimizer.hpp"
