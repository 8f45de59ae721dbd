#pragma once

#include "ftclip/dataset.hpp"
#include "ftclip/fault.hpp"
#include "ftclip/model.hpp"
#include "ftclip/model_io.hpp"
#include "ftclip/numeric_format.hpp"
#include "ftclip/ops.hpp"
#include "ftclip/parallel.hpp"
#include "ftclip/philox.hpp"
#include "ftclip/profiler.hpp"
#include "ftclip/resilience.hpp"
#include "ftclip/svg.hpp"
#include "ftclip/tensor.hpp"
#include "ftclip/tuner.hpp"
