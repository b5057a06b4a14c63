#pragma once

#include "gwmerge/error.hpp"
#include "gwmerge/gw.hpp"
#include "gwmerge/merger.hpp"
#include "gwmerge/metrics.hpp"
#include "gwmerge/pipeline.hpp"
#include "gwmerge/planner.hpp"
#include "gwmerge/similarity.hpp"
#include "gwmerge/sinkhorn.hpp"
#include "gwmerge/tensor_io.hpp"
