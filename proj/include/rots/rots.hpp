#ifndef ROTS_ROTS_HPP
#define ROTS_ROTS_HPP

#include "core.hpp"
#include "ts_data.hpp"
#include "align_kernel.hpp"
#include "diffnet.hpp"
#include "scagda.hpp"
#include "rots_train.hpp"
#include "baselines.hpp"
#include "plbench.hpp"

#endif
