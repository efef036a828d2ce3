#ifndef FRK_FRK_HPP
#define FRK_FRK_HPP

#include "frk/basis.hpp"
#include "frk/common.hpp"
#include "frk/estimation.hpp"
#include "frk/geometry.hpp"
#include "frk/io.hpp"
#include "frk/model.hpp"
#include "frk/numerics.hpp"
#include "frk/prediction.hpp"
#include "frk/simulation.hpp"

#endif  // FRK_FRK_HPP
