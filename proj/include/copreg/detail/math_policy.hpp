#pragma once

#include <boost/math/policies/policy.hpp>

namespace copreg::detail {

// Double-precision evaluation throughout; the default policy promotes to long
// double internally, which roughly triples the cost of gamma_p / ibeta in the
// likelihood loops without a measurable accuracy gain at our tolerances.
using fast_policy = boost::math::policies::policy<boost::math::policies::promote_double<false>,
                                                  boost::math::policies::promote_float<false>>;

}  // namespace copreg::detail
