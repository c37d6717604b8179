#pragma once

#include "tilerun/ann.hpp"
#include "tilerun/cache.hpp"
#include "tilerun/config.hpp"
#include "tilerun/device.hpp"
#include "tilerun/error.hpp"
#include "tilerun/generate.hpp"
#include "tilerun/matrix.hpp"
#include "tilerun/matrix_io.hpp"
#include "tilerun/report.hpp"
#include "tilerun/scheduler.hpp"
#include "tilerun/station.hpp"
#include "tilerun/sweep.hpp"
#include "tilerun/task_queue.hpp"
#include "tilerun/tiled_matrix.hpp"
