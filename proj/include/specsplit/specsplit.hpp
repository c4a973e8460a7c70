#pragma once

#include "specsplit/error.hpp"
#include "specsplit/geometry.hpp"
#include "specsplit/mesh.hpp"
#include "specsplit/fem.hpp"
#include "specsplit/eigensolver.hpp"
#include "specsplit/shape_derivative.hpp"
#include "specsplit/splitter.hpp"
#include "specsplit/io.hpp"
