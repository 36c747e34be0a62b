#pragma once

#include "pis/error.hpp"
#include "pis/geometry.hpp"
#include "pis/function.hpp"
#include "pis/fields.hpp"
#include "pis/calculus.hpp"
#include "pis/expr.hpp"
#include "pis/integrate.hpp"
#include "pis/structures.hpp"
#include "pis/trivialization.hpp"
#include "pis/frequency.hpp"
#include "pis/kam.hpp"
#include "pis/registry.hpp"
#include "pis/config.hpp"
#include "pis/cli.hpp"
