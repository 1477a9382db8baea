#pragma once

#include "infocal/data.hpp"
#include "infocal/eval.hpp"
#include "infocal/lm.hpp"
#include "infocal/model.hpp"
#include "infocal/num/checkpoint.hpp"
#include "infocal/num/gradcheck.hpp"
#include "infocal/training.hpp"
