#pragma once

#include <limits>
#include <vector>

namespace ivkit {

/// A closed interval [lower, upper].
struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double length() const { return upper - lower; }
  bool contains(double x) const { return x >= lower && x <= upper; }
  bool overlaps(const Interval& o) const {
    return lower <= o.upper && o.lower <= upper;
  }
};

/// Finite union of disjoint closed intervals, sorted ascending.
/// An empty `intervals` sequence denotes the empty set.
class IntervalUnion {
 public:
  IntervalUnion() = default;

  /// Normalizing constructor: sorts, drops malformed pieces (lower > upper),
  /// and merges overlapping or touching intervals into a disjoint sequence.
  static IntervalUnion from_intervals(std::vector<Interval> pieces);

  /// Single-interval convenience.
  static IntervalUnion single(double lower, double upper);

  const std::vector<Interval>& intervals() const { return intervals_; }
  bool empty() const { return intervals_.empty(); }
  std::size_t size() const { return intervals_.size(); }

  bool contains(double x) const;
  /// Sum of the lengths of all component intervals.
  double total_length() const;
  /// Smallest lower endpoint; NaN when empty.
  double lower_bound() const;
  /// Largest upper endpoint; NaN when empty.
  double upper_bound() const;
  /// Bounding interval [lower_bound, upper_bound] as a single-piece union.
  IntervalUnion hull() const;

  /// True when `other` contains every point of this union (grid-free check
  /// on endpoints: every piece of *this lies inside some piece of other).
  bool subset_of(const IntervalUnion& other) const;

 private:
  std::vector<Interval> intervals_;
};

}  // namespace ivkit
