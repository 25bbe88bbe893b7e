#pragma once

#include "marketdyn/competition.hpp"
#include "marketdyn/error.hpp"
#include "marketdyn/feedback.hpp"
#include "marketdyn/games.hpp"
#include "marketdyn/monopoly.hpp"
#include "marketdyn/numerics.hpp"
#include "marketdyn/scenario.hpp"
