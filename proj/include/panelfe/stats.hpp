#pragma once

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "panelfe/common.hpp"

namespace panelfe {

inline double t_pvalue(double t, double dof) {
    if (!std::isfinite(t)) return std::isnan(t) ? kNaN : 0.0;
    boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline double t_quantile(double p, double dof) {
    boost::math::students_t dist(dof);
    return boost::math::quantile(dist, p);
}

inline double chi2_pvalue(double stat, double dof) {
    if (stat <= 0.0) return 1.0;
    boost::math::chi_squared dist(dof);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double normal_pvalue_two_sided(double z) {
    boost::math::normal dist;
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
}

}  // namespace panelfe
