#pragma once

#include "oasflow/checkpoint.hpp"
#include "oasflow/flow_viz.hpp"
#include "oasflow/gradcheck.hpp"
#include "oasflow/ppm.hpp"
