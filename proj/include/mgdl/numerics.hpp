#pragma once

#include "mgdl/numerics/grad_check.hpp"
#include "mgdl/numerics/ops.hpp"
#include "mgdl/numerics/tensor.hpp"
