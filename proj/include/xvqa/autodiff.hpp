#pragma once

#include "xvqa/autodiff/gradcheck.hpp"
#include "xvqa/autodiff/nn.hpp"
#include "xvqa/autodiff/ops.hpp"
#include "xvqa/autodiff/optimizer.hpp"
#include "xvqa/autodiff/parameters.hpp"
#include "xvqa/autodiff/tape.hpp"
#include "xvqa/autodiff/tensor.hpp"
