#pragma once

#include "polycbf/controller.hpp"
#include "polycbf/diffopt.hpp"
#include "polycbf/dynamics.hpp"
#include "polycbf/errors.hpp"
#include "polycbf/geometry.hpp"
#include "polycbf/output.hpp"
#include "polycbf/qp.hpp"
#include "polycbf/sdf.hpp"
#include "polycbf/sim.hpp"
