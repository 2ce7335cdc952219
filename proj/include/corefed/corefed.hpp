#pragma once

#include "corefed/audit.hpp"
#include "corefed/data.hpp"
#include "corefed/errors.hpp"
#include "corefed/federation.hpp"
#include "corefed/io.hpp"
#include "corefed/models.hpp"
#include "corefed/rng.hpp"
#include "corefed/solver.hpp"
#include "corefed/utility.hpp"
