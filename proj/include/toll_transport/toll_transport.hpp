#pragma once

#include "toll_transport/analysis.hpp"
#include "toll_transport/cost_kernels.hpp"
#include "toll_transport/coupling.hpp"
#include "toll_transport/entropic_solver.hpp"
#include "toll_transport/errors.hpp"
#include "toll_transport/extensions.hpp"
#include "toll_transport/io.hpp"
#include "toll_transport/lp_solver.hpp"
#include "toll_transport/measures.hpp"
#include "toll_transport/solve.hpp"
