#include "mflq/rng.hpp"

#include <cmath>
#include <numbers>

namespace mflq {

// Box-Muller.  uniform_pos keeps the logarithm finite; exactly two words are
// consumed, so word-level accounting stays static across platforms.
double CounterRng::normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace mflq
