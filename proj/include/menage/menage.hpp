#pragma once

#include "menage/analog.hpp"
#include "menage/bits.hpp"
#include "menage/core_sim.hpp"
#include "menage/error.hpp"
#include "menage/mapper.hpp"
#include "menage/matrix.hpp"
#include "menage/mem_image.hpp"
#include "menage/metrics.hpp"
#include "menage/pipeline.hpp"
#include "menage/reference.hpp"
#include "menage/snn_model.hpp"
#include "menage/trace.hpp"
