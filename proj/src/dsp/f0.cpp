#include "timbre/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace timbre::dsp {

void F0Track::validate() const {
  if (f0_hz.size() != voiced.size()) throw std::invalid_argument("F0Track: length mismatch");
  for (size_t i = 0; i < f0_hz.size(); ++i) {
    const bool has_f0 = f0_hz[i] > 0.0f;
    if (has_f0 != (voiced[i] != 0) || !std::isfinite(f0_hz[i])) {
      throw std::invalid_argument("F0Track: frame " + std::to_string(i) +
                                  " violates f0 == 0 <=> unvoiced");
    }
  }
}

F0Stats compute_f0_stats(const std::vector<const F0Track*>& tracks) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const F0Track* t : tracks) {
    for (Index i = 0; i < t->n_frames(); ++i) {
      if (!t->voiced[i]) continue;
      const double l = std::log(double(t->f0_hz[i]));
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
  }
  if (!std::isfinite(lo)) throw std::invalid_argument("compute_f0_stats: no voiced frames");
  if (hi - lo < 1e-6) hi = lo + 1e-6;
  return {lo, hi};
}

Mat<float> normalize_f0(const F0Track& track, const F0Stats& stats) {
  if (track.n_frames() == 0) throw std::invalid_argument("normalize_f0: empty track");
  track.validate();
  const double span = stats.log_max - stats.log_min;
  if (!(span > 0)) throw std::invalid_argument("normalize_f0: degenerate corpus stats");
  Mat<float> out(track.n_frames(), 2);
  float held = 0.0f;
  for (Index i = 0; i < track.n_frames(); ++i) {
    if (track.voiced[i]) {
      held = static_cast<float>(2.0 * (std::log(double(track.f0_hz[i])) - stats.log_min) / span -
                                1.0);
    }
    out(i, 0) = held;
    out(i, 1) = track.voiced[i] ? 1.0f : 0.0f;
  }
  return out;
}

}  // namespace timbre::dsp
