#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cstddef>
#include <vector>

namespace teststats {

/// Pearson goodness-of-fit p-value of observed counts against expected probabilities.
/// Cells with zero expected probability are skipped.
inline double chi_square_p(std::vector<double> const& observed, std::vector<double> const& probs) {
    double total = 0;
    for (double o : observed)
        total += o;
    double stat = 0;
    int cells = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (probs[i] <= 0)
            continue;
        double const e = total * probs[i];
        stat += (observed[i] - e) * (observed[i] - e) / e;
        ++cells;
    }
    boost::math::chi_squared dist(cells - 1);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

} // namespace teststats
