#pragma once

#include "bonmf/baselines.hpp"
#include "bonmf/checkpoint.hpp"
#include "bonmf/data.hpp"
#include "bonmf/error.hpp"
#include "bonmf/eval.hpp"
#include "bonmf/experiment.hpp"
#include "bonmf/model.hpp"
#include "bonmf/numerics.hpp"
#include "bonmf/rng.hpp"
#include "bonmf/synthetic.hpp"
#include "bonmf/train.hpp"
