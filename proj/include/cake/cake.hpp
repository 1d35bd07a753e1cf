#pragma once

#include "cake/checkpoint.hpp"
#include "cake/datamodel.hpp"
#include "cake/metrics.hpp"
#include "cake/model.hpp"
#include "cake/numerics.hpp"
#include "cake/objective.hpp"
#include "cake/optim.hpp"
#include "cake/trainer.hpp"
#include "cake/vizmap.hpp"
#include "cake/gradcheck.hpp"
