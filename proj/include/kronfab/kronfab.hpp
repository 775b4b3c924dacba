#pragma once

// Krylov evaluation of f(A)b for Kronecker sums A = M2 (x) I + I (x) M1
// with low-rank right-hand sides: factored approximations, fast paths for
// exp/sin/cos, Sylvester-based inverses, Stieltjes quadrature, and the
// convergence bounds as executable envelopes.

#include "kronfab/la_core.hpp"
#include "kronfab/smallfun.hpp"
#include "kronfab/krylov.hpp"
#include "kronfab/kronfun.hpp"
#include "kronfab/sylv.hpp"
#include "kronfab/stieltjes.hpp"
#include "kronfab/bounds.hpp"
#include "kronfab/matrix_market.hpp"
#include "kronfab/graph.hpp"
#include "kronfab/bench.hpp"
