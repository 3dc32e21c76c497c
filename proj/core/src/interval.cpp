#include "ivkit/interval.hpp"

#include <algorithm>
#include <cmath>

namespace ivkit {

IntervalUnion IntervalUnion::from_intervals(std::vector<Interval> pieces) {
  IntervalUnion out;
  pieces.erase(std::remove_if(pieces.begin(), pieces.end(),
                              [](const Interval& iv) {
                                return !(iv.lower <= iv.upper) ||
                                       std::isnan(iv.lower) ||
                                       std::isnan(iv.upper);
                              }),
               pieces.end());
  std::sort(pieces.begin(), pieces.end(), [](const Interval& a, const Interval& b) {
    return a.lower < b.lower || (a.lower == b.lower && a.upper < b.upper);
  });
  for (const Interval& iv : pieces) {
    if (!out.intervals_.empty() && iv.lower <= out.intervals_.back().upper) {
      out.intervals_.back().upper = std::max(out.intervals_.back().upper, iv.upper);
    } else {
      out.intervals_.push_back(iv);
    }
  }
  return out;
}

IntervalUnion IntervalUnion::single(double lower, double upper) {
  return from_intervals({Interval{lower, upper}});
}

bool IntervalUnion::contains(double x) const {
  for (const Interval& iv : intervals_) {
    if (iv.contains(x)) return true;
    if (iv.lower > x) break;
  }
  return false;
}

double IntervalUnion::total_length() const {
  double s = 0.0;
  for (const Interval& iv : intervals_) s += iv.length();
  return s;
}

double IntervalUnion::lower_bound() const {
  return empty() ? std::numeric_limits<double>::quiet_NaN() : intervals_.front().lower;
}

double IntervalUnion::upper_bound() const {
  return empty() ? std::numeric_limits<double>::quiet_NaN() : intervals_.back().upper;
}

IntervalUnion IntervalUnion::hull() const {
  if (empty()) return {};
  return single(lower_bound(), upper_bound());
}

bool IntervalUnion::subset_of(const IntervalUnion& other) const {
  for (const Interval& iv : intervals_) {
    bool covered = false;
    for (const Interval& jv : other.intervals_) {
      if (jv.lower <= iv.lower && iv.upper <= jv.upper) {
        covered = true;
        break;
      }
    }
    if (!covered) return false;
  }
  return true;
}

}  // namespace ivkit
